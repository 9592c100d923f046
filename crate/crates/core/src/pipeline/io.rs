//! Raw planar YUV 4:2:0 and Y4M input/output.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::frame::{check_even, Planes420};
use crate::error::{Error, Result};

fn bytes_per_sample(bit_depth: u8) -> usize {
    if bit_depth > 8 {
        2
    } else {
        1
    }
}

fn frame_bytes(width: usize, height: usize, bit_depth: u8) -> usize {
    (width * height + 2 * (width / 2) * (height / 2)) * bytes_per_sample(bit_depth)
}

fn parse_frame(data: &[u8], width: usize, height: usize, bit_depth: u8) -> Result<Planes420> {
    let samples: Vec<u16> = if bit_depth > 8 {
        data.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    let (ny, nc) = (width * height, (width / 2) * (height / 2));
    Planes420::new(
        width,
        height,
        bit_depth,
        samples[..ny].to_vec(),
        samples[ny..ny + nc].to_vec(),
        samples[ny + nc..].to_vec(),
    )
    .map_err(|e| Error::Format(e.to_string()))
}

fn serialize_frame(p: &Planes420, out: &mut Vec<u8>) {
    for plane in [&p.y, &p.u, &p.v] {
        if p.bit_depth > 8 {
            for &s in plane.iter() {
                out.extend_from_slice(&s.to_le_bytes());
            }
        } else {
            out.extend(plane.iter().map(|&s| s as u8));
        }
    }
}

/// Parses headerless planar 4:2:0 data (samples above 8 bits are 16-bit little-endian).
pub fn parse_yuv(data: &[u8], width: usize, height: usize, bit_depth: u8) -> Result<Vec<Planes420>> {
    check_even(width, height)?;
    let n = frame_bytes(width, height, bit_depth);
    if data.len() % n != 0 {
        return Err(Error::Format(format!("{} bytes is not a whole number of {n}-byte frames", data.len())));
    }
    data.chunks_exact(n).map(|c| parse_frame(c, width, height, bit_depth)).collect()
}

pub fn read_yuv(path: &Path, width: usize, height: usize, bit_depth: u8) -> Result<Vec<Planes420>> {
    parse_yuv(&fs::read(path)?, width, height, bit_depth)
}

pub fn serialize_yuv(frames: &[Planes420]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in frames {
        serialize_frame(f, &mut out);
    }
    out
}

pub fn write_yuv(path: &Path, frames: &[Planes420]) -> Result<()> {
    fs::write(path, serialize_yuv(frames))?;
    Ok(())
}

/// Parses a Y4M stream with 4:2:0 chroma (8-bit or `C420p10`).
pub fn parse_y4m(data: &[u8]) -> Result<Vec<Planes420>> {
    let line_end = |from: usize| {
        data[from..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| from + p)
            .ok_or_else(|| Error::Format("unterminated Y4M header line".into()))
    };
    let end = line_end(0)?;
    let header = std::str::from_utf8(&data[..end]).map_err(|_| Error::Format("Y4M header is not text".into()))?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(Error::Format("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height, mut bit_depth) = (0usize, 0usize, 8u8);
    for t in tokens {
        let (tag, val) = t.split_at(1.min(t.len()));
        match tag {
            "W" => width = val.parse().map_err(|_| Error::Format(format!("bad width {val}")))?,
            "H" => height = val.parse().map_err(|_| Error::Format(format!("bad height {val}")))?,
            "C" => {
                bit_depth = match val {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => 8,
                    "420p10" => 10,
                    other => return Err(Error::Format(format!("unsupported Y4M colour space {other}"))),
                }
            }
            _ => {}
        }
    }
    check_even(width, height).map_err(|e| Error::Format(e.to_string()))?;
    let n = frame_bytes(width, height, bit_depth);
    let mut pos = end + 1;
    let mut frames = Vec::new();
    while pos < data.len() {
        let e = line_end(pos)?;
        if !data[pos..e].starts_with(b"FRAME") {
            return Err(Error::Format(format!("expected FRAME marker at byte {pos}")));
        }
        pos = e + 1;
        let body = data
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("truncated Y4M frame".into()))?;
        frames.push(parse_frame(body, width, height, bit_depth)?);
        pos += n;
    }
    Ok(frames)
}

pub fn read_y4m(path: &Path) -> Result<Vec<Planes420>> {
    parse_y4m(&fs::read(path)?)
}

pub fn serialize_y4m(frames: &[Planes420]) -> Result<Vec<u8>> {
    let first = frames.first().ok_or_else(|| Error::Format("cannot write an empty Y4M stream".into()))?;
    let cs = match first.bit_depth {
        8 => "420jpeg",
        10 => "420p10",
        d => return Err(Error::Format(format!("Y4M output supports 8 or 10 bits, not {d}"))),
    };
    let mut out = Vec::new();
    writeln!(out, "YUV4MPEG2 W{} H{} F25:1 Ip A1:1 C{cs}", first.width, first.height)?;
    for f in frames {
        out.extend_from_slice(b"FRAME\n");
        serialize_frame(f, &mut out);
    }
    Ok(out)
}

pub fn write_y4m(path: &Path, frames: &[Planes420]) -> Result<()> {
    fs::write(path, serialize_y4m(frames)?)?;
    Ok(())
}

/// Reads `.y4m` files by extension, anything else as raw YUV with the given format.
pub fn read_video(path: &Path, width: usize, height: usize, bit_depth: u8) -> Result<Vec<Planes420>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")) {
        read_y4m(path)
    } else {
        read_yuv(path, width, height, bit_depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(bit_depth: u8, seed: u16) -> Planes420 {
        let max = super::super::frame::max_value(bit_depth);
        let y = (0..32).map(|i| (i * 37 + seed) % (max + 1)).collect();
        let u = (0..8).map(|i| (i * 91 + seed) % (max + 1)).collect();
        let v = (0..8).map(|i| (i * 13 + seed) % (max + 1)).collect();
        Planes420::new(8, 4, bit_depth, y, u, v).unwrap()
    }

    #[test]
    fn yuv_round_trip_8_and_10_bit() {
        for bd in [8, 10] {
            let frames = vec![sample(bd, 1), sample(bd, 500)];
            let bytes = serialize_yuv(&frames);
            assert_eq!(bytes.len(), 2 * 48 * bytes_per_sample(bd));
            assert_eq!(parse_yuv(&bytes, 8, 4, bd).unwrap(), frames);
        }
    }

    #[test]
    fn y4m_round_trip() {
        for bd in [8, 10] {
            let frames = vec![sample(bd, 3), sample(bd, 4), sample(bd, 5)];
            let bytes = serialize_y4m(&frames).unwrap();
            assert_eq!(parse_y4m(&bytes).unwrap(), frames);
        }
    }

    #[test]
    fn partial_frame_is_rejected() {
        let bytes = serialize_yuv(&[sample(8, 0)]);
        assert!(matches!(parse_yuv(&bytes[..40], 8, 4, 8), Err(Error::Format(_))));
        assert!(matches!(parse_y4m(b"YUV4MPEG2 W8 H4 C444\n"), Err(Error::Format(_))));
    }
}
