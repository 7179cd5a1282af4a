//! `scn-1` scenario JSON and `PTS1` point records.
//!
//! A PTS1 side-car is a concatenation of records, one per frame:
//! `"PTS1"`, a u64 LE point count, then `count` little-endian f32 `(x, y, z)`
//! triples in the sensor frame.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::scenario::Scenario;
use super::sweep::simulate_all_sweeps;
use crate::error::{Error, Result};
use crate::raster::LidarSweep;

pub const PTS_MAGIC: &[u8; 4] = b"PTS1";

pub fn write_pts_record<W: Write>(mut w: W, points: &[[f32; 3]]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(12 + 12 * points.len());
    buf.extend_from_slice(PTS_MAGIC);
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Reads every record until end of input.
pub fn read_pts_records<R: Read>(mut r: R) -> Result<Vec<Vec<[f32; 3]>>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format("PTS1", e.to_string()))?;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 12 {
            return Err(Error::format("PTS1", format!("truncated record header at byte {pos}")));
        }
        if &bytes[pos..pos + 4] != PTS_MAGIC {
            return Err(Error::format("PTS1", format!("bad magic at byte {pos}")));
        }
        let count = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap());
        pos += 12;
        let need = count
            .checked_mul(12)
            .and_then(|n| usize::try_from(n).ok())
            .filter(|&n| n <= bytes.len() - pos)
            .ok_or_else(|| Error::format("PTS1", format!("record claims {count} points past end of data")))?;
        let points = bytes[pos..pos + need]
            .chunks_exact(12)
            .map(|c| {
                let f = |i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap());
                [f(0), f(1), f(2)]
            })
            .collect();
        pos += need;
        out.push(points);
    }
    Ok(out)
}

pub fn scenario_to_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    s.push('\n');
    s
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| Error::format("scn-1", e.to_string()))?;
    s.validate()?;
    Ok(s)
}

/// Writes `<dir>/<stem>.json` and its `<stem>.pts` side-car.
pub fn write_scenario_files(dir: &Path, stem: &str, scenario: &Scenario, sweeps: &[LidarSweep]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pts_name = format!("{stem}.pts");
    let mut sc = scenario.clone();
    sc.sweeps = Some(pts_name.clone());
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, scenario_to_json(&sc)).map_err(|e| Error::io(&json_path, e))?;
    let pts_path = dir.join(pts_name);
    let mut buf = Vec::new();
    for s in sweeps {
        write_pts_record(&mut buf, &s.points).expect("in-memory write");
    }
    fs::write(&pts_path, buf).map_err(|e| Error::io(&pts_path, e))?;
    Ok(json_path)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scenario_from_json(&text).map_err(|e| match e {
        Error::Format { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message: format!("scn-1: {message}"),
        },
        other => other,
    })
}

/// Sweeps of a scenario read from its side-car, or simulated from the
/// scenario's own sensor settings when it names none.
pub fn load_sweeps(scenario_path: &Path, scenario: &Scenario) -> Result<Vec<LidarSweep>> {
    let Some(name) = &scenario.sweeps else {
        return simulate_all_sweeps(scenario);
    };
    let path = scenario_path.parent().unwrap_or(Path::new(".")).join(name);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let records = read_pts_records(std::io::BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if records.len() != scenario.num_frames() {
        return Err(Error::Parse {
            path,
            message: format!("{} sweep records for {} frames", records.len(), scenario.num_frames()),
        });
    }
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(f, points)| LidarSweep {
            timestamp: f as f64 / scenario.frame_rate,
            points,
            pose: scenario.sensor_pose(f),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, ScenarioSpec};

    #[test]
    fn pts_layout() {
        let mut buf = Vec::new();
        write_pts_record(&mut buf, &[[1.0, -2.0, 0.5]]).unwrap();
        write_pts_record(&mut buf, &[]).unwrap();
        assert_eq!(buf.len(), 12 + 12 + 12);
        assert_eq!(&buf[0..4], b"PTS1");
        assert_eq!(&buf[4..12], &1u64.to_le_bytes());
        assert_eq!(&buf[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&buf[16..20], &(-2.0f32).to_le_bytes());
        let recs = read_pts_records(&buf[..]).unwrap();
        assert_eq!(recs, vec![vec![[1.0, -2.0, 0.5]], vec![]]);
        assert!(read_pts_records(&buf[..buf.len() - 1]).is_err());
        assert!(read_pts_records(&buf[..20]).is_err());
    }

    #[test]
    fn scenario_round_trip() {
        let sc = generate(&ScenarioSpec { seed: 5, num_actors: 6, ..ScenarioSpec::default() }).unwrap();
        let json = scenario_to_json(&sc);
        let back = scenario_from_json(&json).unwrap();
        assert_eq!(back, sc);
        assert_eq!(scenario_to_json(&back), json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["version"], "scn-1");
        assert!(v["actors"][0]["poses"][0].as_array().unwrap().len() == 3);
        assert!(scenario_from_json(&json.replace("scn-1", "scn-9")).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sc = generate(&ScenarioSpec { seed: 8, num_actors: 3, ..ScenarioSpec::default() }).unwrap();
        let sweeps = simulate_all_sweeps(&sc).unwrap();
        let path = write_scenario_files(dir.path(), "s0", &sc, &sweeps).unwrap();
        let back = read_scenario(&path).unwrap();
        assert_eq!(back.sweeps.as_deref(), Some("s0.pts"));
        assert_eq!(load_sweeps(&path, &back).unwrap(), sweeps);
    }
}
