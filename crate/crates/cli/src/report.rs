//! CSV and JSON writers. Detections are identified by id, `⊥` is written
//! as `_`, and floats use the shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackuq_core::model::{Assignment, EdgeProbabilityMatrix};

use crate::error::{CliError, Result};
use crate::experiment::MethodReport;
use crate::sequence::Sequence;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn id_or_bottom(ids: &[u32], index: Option<usize>) -> String {
    index.map(|i| ids[i].to_string()).unwrap_or_else(|| "_".into())
}

/// `frame_pair,source_frame,target_frame,mother,daughter` for every MAP edge.
pub fn tracks_csv(seq: &Sequence, maps: &[Option<Assignment>]) -> String {
    let mut out = String::from("frame_pair,source_frame,target_frame,mother,daughter\n");
    for (t, map) in maps.iter().enumerate() {
        let Some(map) = map else { continue };
        let (src, tgt) = seq.pair(t);
        let mids: Vec<u32> = src.detections.iter().map(|d| d.id).collect();
        let dids: Vec<u32> = tgt.detections.iter().map(|d| d.id).collect();
        for e in map.edges() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{}",
                src.time_index,
                tgt.time_index,
                id_or_bottom(&mids, e.mother()),
                id_or_bottom(&dids, e.daughter())
            );
        }
    }
    out
}

/// `frame_pair,mother,daughter,p_joint,p_cond`. Entries that are zero in
/// both matrices are skipped; `p_joint` is empty for softmax methods and
/// `p_cond` is empty on disappearance rows.
pub fn edges_csv(seq: &Sequence, joint: &[Option<EdgeProbabilityMatrix>], cond: &[Option<EdgeProbabilityMatrix>]) -> String {
    let mut out = String::from("frame_pair,mother,daughter,p_joint,p_cond\n");
    for (t, p) in cond.iter().enumerate() {
        let Some(p) = p else { continue };
        let j = joint.get(t).and_then(Option::as_ref);
        let (src, tgt) = seq.pair(t);
        let mids: Vec<u32> = src.detections.iter().map(|d| d.id).collect();
        for (d, det) in tgt.detections.iter().enumerate() {
            let mothers = (0..p.mothers()).map(Some).chain([None]);
            for i in mothers {
                let pc = p.get(i, d);
                let pj = j.map(|j| j.get(i, d));
                if pc == 0.0 && pj.unwrap_or(0.0) == 0.0 {
                    continue;
                }
                let _ = writeln!(out, "{t},{},{},{},{pc}", id_or_bottom(&mids, i), det.id, opt(pj));
            }
        }
        if let Some(dis) = j.and_then(|j| j.disappear()) {
            for (i, &pd) in dis.iter().enumerate() {
                if pd > 0.0 {
                    let _ = writeln!(out, "{t},{},_,{pd},", mids[i]);
                }
            }
        }
    }
    out
}

pub fn reliability_csv(r: &MethodReport) -> String {
    let mut out = String::from("bin,lower,upper,count,mean_confidence,empirical_accuracy\n");
    for (b, bin) in r.bins.iter().enumerate() {
        let _ = writeln!(
            out,
            "{b},{},{},{},{},{}",
            bin.lower,
            bin.upper,
            bin.count,
            opt(bin.mean_confidence),
            opt(bin.empirical_accuracy)
        );
    }
    out
}

pub fn sparsification_csv(r: &MethodReport) -> String {
    let mut out =
        String::from("criterion,quantile,threshold,retained_fraction,retained_accuracy,baseline_accuracy,improvement\n");
    for c in &r.curves {
        for (k, q) in c.quantiles.iter().enumerate() {
            let acc = c.retained_accuracy[k];
            let _ = writeln!(
                out,
                "{},{q},{},{},{},{},{}",
                c.criterion.name(),
                c.thresholds[k],
                c.retained_fraction[k],
                opt(acc),
                c.baseline_accuracy,
                opt(acc.map(|a| a - c.baseline_accuracy))
            );
        }
    }
    out
}

/// A fitted temperature together with the setting it was fitted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRecord {
    pub method: String,
    pub cost_model: String,
    pub subsample_factor: usize,
    pub tau: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(TemperatureRecord),
    Many(Vec<TemperatureRecord>),
}

/// Reads a single record or an array of records.
pub fn read_temperatures(path: &Path) -> Result<Vec<TemperatureRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match serde_json::from_str(&text) {
        Ok(OneOrMany::One(r)) => Ok(vec![r]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(e) => Err(CliError::parse(path, e.line(), e.to_string())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackuq_core::costs::CostModel;
    use trackuq_core::dbmc::softmax_columns;
    use trackuq_core::model::{Detection, Frame, ProbabilityKind};

    fn toy() -> Sequence {
        let f0 = Frame::new(0, vec![Detection::point(4, [0.0, 0.0])]).unwrap();
        let f1 = Frame::new(1, vec![Detection::point(7, [1.0, 0.0]), Detection::point(8, [5.0, 0.0])]).unwrap();
        Sequence::new(vec![f0, f1], None, "toy").unwrap()
    }

    #[test]
    fn edges_use_ids_and_bottom() {
        let seq = toy();
        let map = Assignment::from_parents(1, &[Some(0), None]).unwrap();
        assert_eq!(
            tracks_csv(&seq, &[Some(map)]),
            "frame_pair,source_frame,target_frame,mother,daughter\n0,0,1,4,7\n0,0,1,_,8\n"
        );
        let costs = CostModel::l2(1.0).unwrap().cost_matrix(&seq.frames[0], &seq.frames[1]).unwrap();
        let p = softmax_columns(&costs, true).unwrap();
        assert_eq!(p.kind(), ProbabilityKind::ColumnNormalized);
        let csv = edges_csv(&seq, &[None], &[Some(p.clone())]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], format!("0,4,7,,{}", p.get(Some(0), 0)));
        assert!(lines[2].starts_with("0,_,7,,"));
    }

    #[test]
    fn temperature_file_forms() {
        let dir = tempfile::tempdir().unwrap();
        let rec = TemperatureRecord {
            method: "SM".into(),
            cost_model: "l2".into(),
            subsample_factor: 10,
            tau: 0.25,
        };
        let one = dir.path().join("one.json");
        write_json(&one, &rec).unwrap();
        assert_eq!(read_temperatures(&one).unwrap(), vec![rec.clone()]);
        let many = dir.path().join("many.json");
        write_json(&many, &vec![rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_temperatures(&many).unwrap().len(), 2);
    }
}
