//! Binary portable graymap (P5) reader/writer.
//!
//! Frames live on disk as 8-bit binary graymaps named `YYYYMMDD_HHMM.pgm`;
//! the timestamp is carried by the file name, matching how the source
//! archive indexes images by time.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imagery::{Frame, Timestamp};

/// Loads a frame from a binary P5 graymap, parsing the timestamp from the
/// `YYYYMMDD_HHMM.pgm` file name and computing validity from the contrast
/// floor.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Name(format!("unreadable file name {path:?}")))?;
    let timestamp = Timestamp::parse_file_stem(stem)?;
    let bytes = fs::read(path)?;
    let (width, height, offset) = parse_p5_header(&bytes)?;
    let expected = width * height;
    if bytes.len() < offset + expected {
        return Err(Error::Format(format!(
            "payload truncated: need {expected} bytes, have {}",
            bytes.len() - offset
        )));
    }
    let pixels = bytes[offset..offset + expected].to_vec();
    Frame::new(width, height, pixels, timestamp)
}

/// Writes the frame as a binary P5 graymap under `dir`, named from the
/// frame's timestamp. Returns the path written.
pub fn save_frame(frame: &Frame, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}.pgm", frame.timestamp.file_stem()));
    write_pgm(&path, frame.width(), frame.height(), frame.pixels())?;
    Ok(path)
}

/// Writes raw bytes as a P5 graymap (used for segmentation masks, motion
/// fields, and detection overlays as well as frames).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    debug_assert_eq!(pixels.len(), width * height);
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(pixels)?;
    out.flush()?;
    Ok(())
}

/// Parses a P5 header ("P5", whitespace/comments, width, height, maxval 255)
/// and returns (width, height, payload offset).
fn parse_p5_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        let magic = bytes.get(0..2).map(|m| String::from_utf8_lossy(m).into_owned());
        return Err(Error::Format(format!(
            "not a binary graymap (magic {:?})",
            magic.unwrap_or_default()
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        pos = skip_whitespace_and_comments(bytes, pos)?;
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format("expected numeric header field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("bad header number {text:?}")))?;
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before payload".into()));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Format(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("zero frame dimension".into()));
    }
    Ok((width, height, pos))
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> Result<usize> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return if pos < bytes.len() {
                Ok(pos)
            } else {
                Err(Error::Format("truncated header".into()))
            };
        }
    }
}

/// Lists `*.pgm` files under `dir` sorted by file name (hence by timestamp).
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "pgm").unwrap_or(false))
        .collect();
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Validity;

    #[test]
    fn all_zero_frame_loads_as_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("20080101_0015.pgm");
        write_pgm(&path, 4, 4, &[0u8; 16]).unwrap();
        let f = load_frame(&path).unwrap();
        assert_eq!((f.width(), f.height()), (4, 4));
        assert_eq!(f.timestamp, Timestamp::from_ymd_hm(2008, 1, 1, 0, 15).unwrap());
        assert_eq!(f.validity, Validity::CorruptLowContrast);
        assert!(f.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("20080101_0015.pgm");
        fs::write(&path, b"P6\n2 2\n255\n....").unwrap();
        assert!(matches!(load_frame(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_file_name_is_name_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame_1.pgm");
        write_pgm(&path, 2, 2, &[0, 50, 100, 200]).unwrap();
        assert!(matches!(load_frame(&path), Err(Error::Name(_))));
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = Vec::with_capacity(1024 * 2048);
        let mut state = 7u64;
        for _ in 0..1024 * 2048 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            pixels.push((state >> 56) as u8);
        }
        let ts = Timestamp::from_ymd_hm(2008, 6, 15, 12, 45).unwrap();
        let frame = Frame::new(2048, 1024, pixels.clone(), ts).unwrap();
        let path = save_frame(&frame, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "20080615_1245.pgm");
        let loaded = load_frame(&path).unwrap();
        assert_eq!(loaded.pixels(), frame.pixels());
        assert_eq!(loaded.timestamp, ts);
        // Re-saving reproduces identical bytes.
        let bytes_a = fs::read(&path).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let path2 = save_frame(&loaded, dir2.path()).unwrap();
        assert_eq!(bytes_a, fs::read(path2).unwrap());
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("20080101_0015.pgm");
        let mut bytes = b"P5\n# produced by a test\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 200]);
        fs::write(&path, bytes).unwrap();
        let f = load_frame(&path).unwrap();
        assert_eq!(f.pixels(), &[1, 2, 3, 200]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("20080101_0015.pgm");
        fs::write(&path, b"P5\n4 4\n255\nxy").unwrap();
        assert!(matches!(load_frame(&path), Err(Error::Format(_))));
    }
}
