//! Flat-file trajectory export and label map.
//!
//! Trajectory file: header `agent_id,kind,frame,x,y,z,d,label`, one point per
//! row, `label` a class name. Label map: `class_index,class_name` rows with
//! dense indices starting at 0.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{wrap_angle, AgentKind, Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};

const COLUMNS: [&str; 8] = ["agent_id", "kind", "frame", "x", "y", "z", "d", "label"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate class name {n:?} in label map")));
            }
        }
        Ok(LabelMap { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let mut entries = Vec::new();
        let mut problems = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            match rec {
                Ok(r) if r.len() == 2 => match r[0].parse::<usize>() {
                    Ok(idx) => entries.push((idx, r[1].to_string())),
                    Err(_) => problems.push(format!("row {row}: class_index {:?} is not an integer", &r[0])),
                },
                Ok(r) => problems.push(format!("row {row}: expected 2 fields, found {}", r.len())),
                Err(e) => problems.push(format!("row {row}: {e}")),
            }
        }
        entries.sort();
        for (pos, (idx, _)) in entries.iter().enumerate() {
            if *idx != pos {
                problems.push(format!("class indices must be dense from 0; found {idx} at position {pos}"));
                break;
            }
        }
        if !problems.is_empty() {
            return Err(Error::Ingestion {
                path: path.display().to_string(),
                rows: problems,
            });
        }
        Self::new(entries.into_iter().map(|(_, n)| n).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["class_index", "class_name"]).map_err(|e| csv_err(path, e))?;
        for (i, n) in self.names.iter().enumerate() {
            w.write_record([i.to_string(), n.clone()]).map_err(|e| csv_err(path, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a trajectory export. Points are grouped per agent (agents in
/// lexicographic id order) and sorted by frame. With `degrees`, `d` is
/// converted to radians before wrapping.
pub fn load_trajectories(path: &Path, labels: &LabelMap, degrees: bool) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut col = [0usize; 8];
    let mut missing = Vec::new();
    for (k, name) in COLUMNS.iter().enumerate() {
        match headers.iter().position(|h| h == *name) {
            Some(p) => col[k] = p,
            None => missing.push(format!("header: missing column {name:?}")),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Ingestion {
            path: path.display().to_string(),
            rows: missing,
        });
    }

    let mut agents: BTreeMap<String, (AgentKind, BTreeMap<u64, TrajectoryPoint>)> = BTreeMap::new();
    let mut problems = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let field = |k: usize| rec.get(col[k]).unwrap_or("");
        let mut errs = Vec::new();
        let kind = field(1).parse::<AgentKind>().map_err(|_| errs.push(format!("unknown kind {:?}", field(1))));
        let frame = field(2)
            .parse::<u64>()
            .map_err(|_| errs.push(format!("frame {:?} is not a non-negative integer", field(2))));
        let mut nums = [0.0; 4];
        for (j, name) in ["x", "y", "z", "d"].iter().enumerate() {
            match field(3 + j).parse::<f64>() {
                Ok(v) if v.is_finite() => nums[j] = v,
                _ => errs.push(format!("{name} {:?} is not a finite number", field(3 + j))),
            }
        }
        let label = labels
            .index_of(field(7))
            .ok_or_else(|| errs.push(format!("label {:?} not in label map", field(7))));
        let agent_id = field(0).to_string();
        if agent_id.is_empty() {
            errs.push("empty agent_id".into());
        }
        if !errs.is_empty() {
            problems.push(format!("row {row}: {}", errs.join("; ")));
            continue;
        }
        let (kind, frame, label) = (kind.unwrap(), frame.unwrap(), label.unwrap());
        let d = if degrees { nums[3].to_radians() } else { nums[3] };
        let point = TrajectoryPoint {
            x: nums[0],
            y: nums[1],
            z: nums[2],
            d: wrap_angle(d),
            label,
            frame,
        };
        let entry = agents.entry(agent_id.clone()).or_insert_with(|| (kind, BTreeMap::new()));
        if entry.0 != kind {
            problems.push(format!(
                "row {row}: agent {agent_id:?} has kind {kind} but earlier rows say {}",
                entry.0
            ));
            continue;
        }
        if entry.1.insert(frame, point).is_some() {
            problems.push(format!("row {row}: duplicate (agent_id, frame) = ({agent_id:?}, {frame})"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion {
            path: path.display().to_string(),
            rows: problems,
        });
    }
    Ok(agents
        .into_iter()
        .map(|(agent_id, (kind, pts))| Trajectory {
            agent_id,
            kind,
            points: pts.into_values().collect(),
        })
        .collect())
}

/// Writes trajectories in the export format. Floats use the shortest
/// representation that parses back to the same value.
pub fn save_trajectories(path: &Path, trajs: &[Trajectory], labels: &LabelMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(COLUMNS).map_err(|e| csv_err(path, e))?;
    for t in trajs {
        for p in &t.points {
            if p.label >= labels.len() {
                return Err(Error::Data(format!(
                    "agent {:?} frame {}: label index {} not in label map",
                    t.agent_id, p.frame, p.label
                )));
            }
            w.write_record([
                t.agent_id.clone(),
                t.kind.to_string(),
                p.frame.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                p.d.to_string(),
                labels.name(p.label).to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn labels() -> LabelMap {
        LabelMap::new(vec!["OFL".into(), "USD".into()]).unwrap()
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("t.csv");
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn two_rows_one_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "agent_id,kind,frame,x,y,z,d,label\na,vehicle,0,1,2,0,0.1,USD\na,vehicle,1,1.5,2,0,0.1,USD\n",
        );
        let t = load_trajectories(&p, &labels(), false).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].points.len(), 2);
        assert_eq!(t[0].points[1].x, 1.5);
        assert_eq!(t[0].points[0].label, 1);
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let sorted = write(
            &dir,
            "agent_id,kind,frame,x,y,z,d,label\na,vehicle,0,1,0,0,0,USD\na,vehicle,1,2,0,0,0,USD\nb,rider,3,5,0,0,0,OFL\n",
        );
        let a = load_trajectories(&sorted, &labels(), false).unwrap();
        let shuffled = write(
            &dir,
            "agent_id,kind,frame,x,y,z,d,label\nb,rider,3,5,0,0,0,OFL\na,vehicle,1,2,0,0,0,USD\na,vehicle,0,1,0,0,0,USD\n",
        );
        let b = load_trajectories(&shuffled, &labels(), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_rows_reported_with_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "agent_id,kind,frame,x,y,z,d,label\na,vehicle,0,1,0,0,0,USD\na,vehicle,0,1,0,0,0,USD\nb,truck,1,x,0,0,0,USD\nc,vehicle,2,0,0,0,0,NOPE\n",
        );
        let err = load_trajectories(&p, &labels(), false).unwrap_err();
        let Error::Ingestion { rows, .. } = &err else { panic!("{err}") };
        assert_eq!(rows.len(), 3, "{rows:?}");
        assert!(rows[0].starts_with("row 3") && rows[0].contains("duplicate"));
        assert!(rows[1].starts_with("row 4") && rows[1].contains("kind") && rows[1].contains("x \"x\""));
        assert!(rows[2].starts_with("row 5") && rows[2].contains("NOPE"));
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "agent_id,kind,frame,x,y,d,label\na,vehicle,0,1,0,0,USD\n");
        let err = load_trajectories(&p, &labels(), false).unwrap_err().to_string();
        assert!(err.contains("\"z\""), "{err}");
    }

    #[test]
    fn degrees_flag_converts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "agent_id,kind,frame,x,y,z,d,label\na,vehicle,0,0,0,0,270,USD\n");
        let t = load_trajectories(&p, &labels(), true).unwrap();
        assert!((t[0].points[0].d + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn label_map_roundtrip_and_density() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        labels().save(&p).unwrap();
        assert_eq!(LabelMap::load(&p).unwrap(), labels());
        std::fs::write(&p, "class_index,class_name\n0,A\n2,B\n").unwrap();
        assert!(LabelMap::load(&p).is_err());
    }
}
