//! Binary PGM (P5) I/O.
//!
//! Message images are 8-bit P5. Camera frames export as 16-bit big-endian
//! P5 with the count scale recorded in a `<path>.meta` sidecar so the
//! original counts can be recovered from pixel values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::modem::ImageMessage;
use crate::scene::FluorescenceFrame;

use super::HarnessError;

/// Write an 8-bit grayscale message image.
pub fn write_pgm8(path: &Path, img: &ImageMessage) -> Result<(), HarnessError> {
    let mut buf = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    buf.extend_from_slice(&img.pixels);
    fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

/// Read an 8-bit P5 image, tolerating `#` comments in the header.
pub fn read_pgm8(path: &Path) -> Result<ImageMessage, HarnessError> {
    let data = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |reason: &str| HarnessError::Pgm { path: path.display().to_string(), reason: reason.into() };

    let mut pos = 0usize;
    let mut next_token = |data: &[u8]| -> Option<(usize, usize)> {
        let mut i = pos;
        loop {
            while i < data.len() && data[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < data.len() && data[i] == b'#' {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            break;
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        pos = i;
        Some((start, i))
    };

    let (s, e) = next_token(&data).ok_or_else(|| bad("missing magic"))?;
    if &data[s..e] != b"P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        let (s, e) = next_token(&data).ok_or_else(|| bad("truncated header"))?;
        *f = std::str::from_utf8(&data[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad header field"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval outside 1..=255 (message images are 8-bit)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let raster_start = pos + 1;
    let n = width * height;
    if data.len() < raster_start + n {
        return Err(bad("truncated raster"));
    }
    Ok(ImageMessage::new(width, height, data[raster_start..raster_start + n].to_vec()))
}

/// Export a frame as 16-bit big-endian P5, counts scaled to the full DN
/// range, with the scale factor in a sidecar text header.
pub fn write_pgm16(path: &Path, frame: &FluorescenceFrame) -> Result<(), HarnessError> {
    let (h, w) = frame.dims();
    let max = frame.counts.iter().copied().fold(0.0f64, f64::max);
    // counts = DN · scale
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let mut buf = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for v in frame.counts.iter() {
        let dn = (v / scale).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&dn.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| HarnessError::io(path, e))?;

    let sidecar = path.with_extension(format!(
        "{}.meta",
        path.extension().and_then(|e| e.to_str()).unwrap_or("pgm")
    ));
    let mut f = fs::File::create(&sidecar).map_err(|e| HarnessError::io(&sidecar, e))?;
    writeln!(f, "scale_counts_per_dn: {scale}").map_err(|e| HarnessError::io(&sidecar, e))?;
    writeln!(f, "width: {w}").map_err(|e| HarnessError::io(&sidecar, e))?;
    writeln!(f, "height: {h}").map_err(|e| HarnessError::io(&sidecar, e))?;
    writeln!(f, "byte_order: big-endian").map_err(|e| HarnessError::io(&sidecar, e))?;
    Ok(())
}

/// Read back a 16-bit frame export (DN values and the sidecar scale).
pub fn read_pgm16(path: &Path) -> Result<(FluorescenceFrame, f64), HarnessError> {
    let data = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |reason: &str| HarnessError::Pgm { path: path.display().to_string(), reason: reason.into() };
    let text_end = data
        .windows(6)
        .position(|w| w == b"65535\n")
        .ok_or_else(|| bad("missing 16-bit maxval"))?
        + 6;
    let header = std::str::from_utf8(&data[..text_end]).map_err(|_| bad("bad header"))?;
    let mut tokens = header.split_ascii_whitespace();
    if tokens.next() != Some("P5") {
        return Err(bad("not a P5 file"));
    }
    let w: usize = tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad width"))?;
    let h: usize = tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad height"))?;

    let sidecar = path.with_extension(format!(
        "{}.meta",
        path.extension().and_then(|e| e.to_str()).unwrap_or("pgm")
    ));
    let meta = fs::read_to_string(&sidecar).map_err(|e| HarnessError::io(&sidecar, e))?;
    let scale: f64 = meta
        .lines()
        .find_map(|l| l.strip_prefix("scale_counts_per_dn:"))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("sidecar missing scale_counts_per_dn"))?;

    let raster = &data[text_end..];
    if raster.len() < 2 * w * h {
        return Err(bad("truncated raster"));
    }
    let counts = ndarray::Array2::from_shape_vec(
        (h, w),
        raster
            .chunks_exact(2)
            .take(w * h)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect(),
    )
    .map_err(|_| bad("raster shape"))?;
    Ok((FluorescenceFrame { counts }, scale))
}
