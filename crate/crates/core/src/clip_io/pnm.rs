//! Binary PGM/PPM frames and frame directories.

use std::path::{Path, PathBuf};

use super::{rgb_to_ycbcr, ChromaLayout, ClipError, Fps, Frame, Plane, Result, VideoClip};

/// A decoded raster: one gray plane or three RGB planes.
#[derive(Debug, Clone, PartialEq)]
pub enum PnmImage {
    Gray { plane: Plane, bit_depth: u8 },
    Rgb { r: Plane, g: Plane, b: Plane, bit_depth: u8 },
}

impl PnmImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            PnmImage::Gray { plane, .. } => (plane.width(), plane.height()),
            PnmImage::Rgb { r, .. } => (r.width(), r.height()),
        }
    }

    fn into_frame(self) -> Frame {
        match self {
            PnmImage::Gray { plane, bit_depth } => Frame::new(plane, None, bit_depth),
            PnmImage::Rgb { r, g, b, bit_depth } => {
                let (w, h) = (r.width(), r.height());
                let mut y = Plane::filled(w, h, 0.0);
                let mut cb = Plane::filled(w, h, 0.0);
                let mut cr = Plane::filled(w, h, 0.0);
                for i in 0..w * h {
                    let (yy, u, v) = rgb_to_ycbcr(r.data()[i], g.data()[i], b.data()[i]);
                    y.data_mut()[i] = yy;
                    cb.data_mut()[i] = u;
                    cr.data_mut()[i] = v;
                }
                Frame::new(y, Some((cb, cr)), bit_depth)
            }
        }
    }
}

fn header_error(position: usize, token: &[u8]) -> ClipError {
    ClipError::Parse {
        position,
        token: String::from_utf8_lossy(token).into_owned(),
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<(usize, &'a [u8])> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(header_error(start, b"<eof>"));
    }
    Ok((start, &data[start..*pos]))
}

fn header_uint(data: &[u8], pos: &mut usize) -> Result<usize> {
    let (at, tok) = next_token(data, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| header_error(at, tok))
}

/// Decodes a binary PGM (`P5`) or PPM (`P6`) with maxval 255 or 1023.
pub fn read_pnm(data: &[u8]) -> Result<PnmImage> {
    let mut pos = 0;
    let (_, magic) = next_token(data, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(ClipError::Unsupported(String::from_utf8_lossy(other).into())),
    };
    let width = header_uint(data, &mut pos)?;
    let height = header_uint(data, &mut pos)?;
    let maxval_at = pos;
    let maxval = header_uint(data, &mut pos)?;
    let (bit_depth, bps) = match maxval {
        255 => (8u8, 1usize),
        1023 => (10u8, 2usize),
        other => {
            return Err(header_error(maxval_at, other.to_string().as_bytes()));
        }
    };
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * channels * bps;
    if data.len() < pos + need {
        return Err(ClipError::TruncatedFrame(0));
    }
    let raster = &data[pos..pos + need];
    let scale = maxval as f32;
    let samples: Vec<f32> = if bps == 2 {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]).min(maxval as u16) as f32 / scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f32 / scale).collect()
    };
    if channels == 1 {
        return Ok(PnmImage::Gray {
            plane: Plane::from_vec(width, height, samples),
            bit_depth,
        });
    }
    let mut planes = [
        Vec::with_capacity(width * height),
        Vec::with_capacity(width * height),
        Vec::with_capacity(width * height),
    ];
    for px in samples.chunks_exact(3) {
        for c in 0..3 {
            planes[c].push(px[c]);
        }
    }
    let [r, g, b] = planes;
    Ok(PnmImage::Rgb {
        r: Plane::from_vec(width, height, r),
        g: Plane::from_vec(width, height, g),
        b: Plane::from_vec(width, height, b),
        bit_depth,
    })
}

fn quantize(out: &mut Vec<u8>, v: f32, bit_depth: u8) {
    let v = v.clamp(0.0, 1.0);
    if bit_depth > 8 {
        out.extend_from_slice(&((v * 1023.0).round() as u16).to_be_bytes());
    } else {
        out.push((v * 255.0).round() as u8);
    }
}

/// Encodes a plane as binary PGM at 8 or 10 bits.
pub fn write_pgm(plane: &Plane, bit_depth: u8) -> Vec<u8> {
    let maxval = if bit_depth > 8 { 1023 } else { 255 };
    let mut out = format!("P5\n{} {}\n{}\n", plane.width(), plane.height(), maxval).into_bytes();
    for &v in plane.data() {
        quantize(&mut out, v, bit_depth);
    }
    out
}

/// Encodes RGB planes as binary 8-bit PPM.
pub fn write_ppm(r: &Plane, g: &Plane, b: &Plane) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    for i in 0..r.len() {
        for p in [r, g, b] {
            quantize(&mut out, p.data()[i], 8);
        }
    }
    out
}

fn is_raster(path: &Path) -> Option<bool> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => Some(false),
        "ppm" => Some(true),
        _ => None,
    }
}

/// Loads every `.pgm`/`.ppm` file in `dir`, ordered by filename, as one clip.
pub fn load_frame_dir(dir: impl AsRef<Path>, fps: Fps) -> Result<VideoClip> {
    let mut files: Vec<(PathBuf, bool)> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter_map(|p| is_raster(&p).map(|rgb| (p, rgb)))
        .collect();
    files.sort_by(|a, b| a.0.file_name().cmp(&b.0.file_name()));
    let Some(&(_, color)) = files.first() else {
        return Err(ClipError::EmptyInput);
    };
    if files.iter().any(|(_, c)| *c != color) {
        return Err(ClipError::Unsupported("mixed PGM and PPM frames".into()));
    }

    let mut frames = Vec::with_capacity(files.len());
    let mut dims = None;
    for (path, _) in &files {
        let image = read_pnm(&std::fs::read(path)?)?;
        match dims {
            None => dims = Some(image.dims()),
            Some(d) if d != image.dims() => return Err(ClipError::DimensionMismatch(path.clone())),
            Some(_) => {}
        }
        frames.push(image.into_frame());
    }
    let (w, h) = dims.expect("at least one frame");
    let layout = if color {
        ChromaLayout::Yuv444
    } else {
        ChromaLayout::Mono
    };
    VideoClip::new(w, h, fps, layout, frames)
}
