//! Label and storm-event records and their CSV formats.
//!
//! Labels: `timestamp,x0,y0,side` (header row required).
//! Storm events: `begin,end,row,col,kind` with ISO-8601 instants.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imagery::{BBox, Timestamp};

/// The eight severe-weather categories admitted to evaluation.
pub const STORM_KINDS: [&str; 8] = [
    "thunderstorm-wind",
    "hail",
    "heavy-rain",
    "flash-flood",
    "lightning",
    "marine-thunderstorm-wind",
    "high-wind",
    "winter-storm",
];

/// A manually labeled comma-shaped cloud on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledCloud {
    pub timestamp: Timestamp,
    pub bbox: BBox,
}

/// One recorded storm event: an active interval and a fixed grid location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StormEvent {
    pub begin: Timestamp,
    pub end: Timestamp,
    pub row: u32,
    pub col: u32,
    pub kind: String,
}

impl StormEvent {
    /// Events admitted to evaluation lasted at least 30 minutes, so they
    /// overlap at least one frame of the half-hourly archive.
    pub fn duration_minutes(&self) -> i64 {
        self.end.minutes_since(self.begin)
    }

    pub fn active_at(&self, ts: Timestamp) -> bool {
        ts >= self.begin && ts <= self.end
    }

    pub fn validate(&self) -> Result<()> {
        if self.begin > self.end {
            return Err(Error::Precondition(format!(
                "storm interval begins after it ends ({} > {})",
                self.begin, self.end
            )));
        }
        Ok(())
    }
}

pub fn write_labels_csv(path: &Path, labels: &[LabeledCloud]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "timestamp,x0,y0,side")?;
    for l in labels {
        writeln!(out, "{},{},{},{}", l.timestamp.to_iso(), l.bbox.x0, l.bbox.y0, l.bbox.side)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<LabeledCloud>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    expect_header(lines.next(), "timestamp,x0,y0,side")?;
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("labels row {}: expected 4 fields", i + 2)));
        }
        let timestamp = Timestamp::parse_iso(fields[0])?;
        let x0 = parse_u32(fields[1], "x0")?;
        let y0 = parse_u32(fields[2], "y0")?;
        let side = parse_u32(fields[3], "side")?;
        if side == 0 {
            return Err(Error::Format(format!("labels row {}: zero side", i + 2)));
        }
        labels.push(LabeledCloud { timestamp, bbox: BBox { x0, y0, side } });
    }
    Ok(labels)
}

pub fn write_storms_csv(path: &Path, storms: &[StormEvent]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "begin,end,row,col,kind")?;
    for s in storms {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.begin.to_iso(),
            s.end.to_iso(),
            s.row,
            s.col,
            s.kind
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_storms_csv(path: &Path) -> Result<Vec<StormEvent>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    expect_header(lines.next(), "begin,end,row,col,kind")?;
    let mut storms = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("storms row {}: expected 5 fields", i + 2)));
        }
        let event = StormEvent {
            begin: Timestamp::parse_iso(fields[0])?,
            end: Timestamp::parse_iso(fields[1])?,
            row: parse_u32(fields[2], "row")?,
            col: parse_u32(fields[3], "col")?,
            kind: fields[4].to_string(),
        };
        event.validate()?;
        storms.push(event);
    }
    Ok(storms)
}

fn expect_header(line: Option<&str>, want: &str) -> Result<()> {
    match line {
        Some(l) if l.trim() == want => Ok(()),
        Some(l) => Err(Error::Format(format!("expected header {want:?}, got {l:?}"))),
        None => Err(Error::Format("empty csv".into())),
    }
}

fn parse_u32(text: &str, field: &str) -> Result<u32> {
    text.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {field} value {text:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![
            LabeledCloud {
                timestamp: Timestamp::from_ymd_hm(2008, 1, 1, 0, 15).unwrap(),
                bbox: BBox { x0: 10, y0: 20, side: 128 },
            },
            LabeledCloud {
                timestamp: Timestamp::from_ymd_hm(2008, 1, 1, 0, 45).unwrap(),
                bbox: BBox { x0: 12, y0: 21, side: 128 },
            },
        ];
        write_labels_csv(&path, &labels).unwrap();
        assert_eq!(read_labels_csv(&path).unwrap(), labels);
    }

    #[test]
    fn storms_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("storms.csv");
        let storms = vec![StormEvent {
            begin: Timestamp::from_ymd_hm(2008, 1, 1, 3, 0).unwrap(),
            end: Timestamp::from_ymd_hm(2008, 1, 1, 4, 0).unwrap(),
            row: 100,
            col: 200,
            kind: "hail".into(),
        }];
        write_storms_csv(&path, &storms).unwrap();
        let loaded = read_storms_csv(&path).unwrap();
        assert_eq!(loaded, storms);
        assert_eq!(loaded[0].duration_minutes(), 60);
        assert!(loaded[0].active_at(Timestamp::from_ymd_hm(2008, 1, 1, 3, 15).unwrap()));
        assert!(!loaded[0].active_at(Timestamp::from_ymd_hm(2008, 1, 1, 4, 15).unwrap()));
    }

    #[test]
    fn missing_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        fs::write(&path, "2008-01-01T00:15,1,2,3\n").unwrap();
        assert!(matches!(read_labels_csv(&path), Err(Error::Format(_))));
    }
}
