use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::homography::Correspondence;
use super::{GpsFix, GpsTrack, Tracklet};
use crate::data::BoundingBox;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackletLine {
    track_id: u64,
    frames: Vec<[f64; 5]>,
}

#[derive(Serialize, Deserialize)]
struct GpsRow {
    cattle_id: String,
    timestamp_s: f64,
    x_m: f64,
    y_m: f64,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// JSON Lines, one `{"track_id":…, "frames":[[t, x0, y0, x1, y1], …]}` per line.
pub fn read_tracklets(path: &Path) -> Result<Vec<Tracklet>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrackletLine = serde_json::from_str(line)
            .map_err(|e| format_error(path, format!("line {}: {e}", lineno + 1)))?;
        let frames = parsed
            .frames
            .iter()
            .map(|f| Ok((f[0], BoundingBox::new(f[1], f[2], f[3], f[4])?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| format_error(path, format!("line {}: {e}", lineno + 1)))?;
        out.push(
            Tracklet::new(parsed.track_id, frames)
                .map_err(|e| format_error(path, format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_tracklets(path: &Path, tracklets: &[Tracklet]) -> Result<()> {
    ensure_parent(path)?;
    let mut f = fs::File::create(path)?;
    for t in tracklets {
        let line = TrackletLine {
            track_id: t.track_id,
            frames: t
                .frames
                .iter()
                .map(|(ts, b)| [*ts, b.x_min, b.y_min, b.x_max, b.y_max])
                .collect(),
        };
        writeln!(f, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

/// CSV `cattle_id,timestamp_s,x_m,y_m`; tracks keep the order of first appearance.
pub fn read_gps_csv(path: &Path) -> Result<Vec<GpsTrack>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut fixes: std::collections::HashMap<String, Vec<GpsFix>> = Default::default();
    for row in reader.deserialize() {
        let row: GpsRow = row?;
        if !fixes.contains_key(&row.cattle_id) {
            order.push(row.cattle_id.clone());
        }
        fixes.entry(row.cattle_id).or_default().push(GpsFix {
            t: row.timestamp_s,
            x: row.x_m,
            y: row.y_m,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let f = fixes.remove(&id).unwrap_or_default();
            GpsTrack::new(id, f).map_err(|e| format_error(path, e.to_string()))
        })
        .collect()
}

pub fn write_gps_csv(path: &Path, tracks: &[GpsTrack]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for t in tracks {
        for f in &t.fixes {
            w.serialize(GpsRow {
                cattle_id: t.cattle_id.clone(),
                timestamp_s: f.t,
                x_m: f.x,
                y_m: f.y,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV `x_m,y_m,u_px,v_px`.
pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<Correspondence>, _>>()?)
}

pub fn write_correspondences(path: &Path, cs: &[Correspondence]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for c in cs {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
