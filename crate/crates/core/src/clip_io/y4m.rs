//! YUV4MPEG2 reading and writing.

use std::io::Write;
use std::path::Path;

use super::{ChromaLayout, ClipError, Fps, Frame, Plane, Result, VideoClip};

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME: &[u8] = b"FRAME";

struct Header {
    width: usize,
    height: usize,
    fps: Fps,
    layout: ChromaLayout,
    bit_depth: u8,
}

fn parse_error(position: usize, token: &[u8]) -> ClipError {
    ClipError::Parse {
        position,
        token: String::from_utf8_lossy(token).into_owned(),
    }
}

fn colorspace(tag: &str) -> Result<(ChromaLayout, u8)> {
    Ok(match tag {
        "420" | "420jpeg" | "420paldv" | "420mpeg2" => (ChromaLayout::Yuv420, 8),
        "422" => (ChromaLayout::Yuv422, 8),
        "444" => (ChromaLayout::Yuv444, 8),
        "mono" => (ChromaLayout::Mono, 8),
        "420p10" => (ChromaLayout::Yuv420, 10),
        "422p10" => (ChromaLayout::Yuv422, 10),
        "444p10" => (ChromaLayout::Yuv444, 10),
        "mono10" => (ChromaLayout::Mono, 10),
        other => return Err(ClipError::Unsupported(other.to_string())),
    })
}

fn colorspace_tag(layout: ChromaLayout, bit_depth: u8) -> &'static str {
    match (layout, bit_depth) {
        (ChromaLayout::Yuv420, 10) => "420p10",
        (ChromaLayout::Yuv422, 10) => "422p10",
        (ChromaLayout::Yuv444, 10) => "444p10",
        (ChromaLayout::Mono, 10) => "mono10",
        (ChromaLayout::Yuv420, _) => "420jpeg",
        (ChromaLayout::Yuv422, _) => "422",
        (ChromaLayout::Yuv444, _) => "444",
        (ChromaLayout::Mono, _) => "mono",
    }
}

fn parse_uint(bytes: &[u8]) -> Option<u64> {
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(bytes).ok()?.parse().ok()
}

/// Parses the header line; returns the header and the offset just past its newline.
fn parse_header(data: &[u8]) -> Result<(Header, usize)> {
    let line_end = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_error(data.len(), b"<missing newline>"))?;
    let line = &data[..line_end];

    let mut width = None;
    let mut height = None;
    let mut fps = None;
    let mut cs = (ChromaLayout::Yuv420, 8u8);

    let mut pos = 0;
    let mut first = true;
    for token in line.split(|&b| b == b' ') {
        let start = pos;
        pos += token.len() + 1;
        if first {
            if token != MAGIC {
                return Err(parse_error(start, token));
            }
            first = false;
            continue;
        }
        if token.is_empty() {
            continue;
        }
        let value = &token[1..];
        match token[0] {
            b'W' => width = Some(parse_uint(value).ok_or_else(|| parse_error(start, token))?),
            b'H' => height = Some(parse_uint(value).ok_or_else(|| parse_error(start, token))?),
            b'F' => {
                let mut parts = value.splitn(2, |&b| b == b':');
                let num = parts.next().and_then(parse_uint);
                let den = parts.next().and_then(parse_uint);
                match (num, den) {
                    (Some(n), Some(d)) if n > 0 && d > 0 && n <= u32::MAX as u64 && d <= u32::MAX as u64 => {
                        fps = Some(Fps {
                            num: n as u32,
                            den: d as u32,
                        })
                    }
                    _ => return Err(parse_error(start, token)),
                }
            }
            b'C' => cs = colorspace(&String::from_utf8_lossy(value))?,
            // Interlacing, aspect ratio and extension tokens do not affect the payload.
            b'I' | b'A' | b'X' => {}
            _ => return Err(parse_error(start, token)),
        }
    }

    let width = match width {
        Some(w) if w > 0 => w as usize,
        _ => return Err(parse_error(line_end, b"W")),
    };
    let height = match height {
        Some(h) if h > 0 => h as usize,
        _ => return Err(parse_error(line_end, b"H")),
    };
    let fps = fps.ok_or_else(|| parse_error(line_end, b"F"))?;

    Ok((
        Header {
            width,
            height,
            fps,
            layout: cs.0,
            bit_depth: cs.1,
        },
        line_end + 1,
    ))
}

fn read_plane(bytes: &[u8], width: usize, height: usize, bit_depth: u8) -> Plane {
    let data = if bit_depth > 8 {
        let maxval = ((1u32 << bit_depth) - 1) as f32;
        bytes
            .chunks_exact(2)
            .map(|c| (u16::from_le_bytes([c[0], c[1]]).min(maxval as u16)) as f32 / maxval)
            .collect()
    } else {
        bytes.iter().map(|&b| b as f32 / 255.0).collect()
    };
    Plane::from_vec(width, height, data)
}

/// Parses a complete YUV4MPEG2 stream held in memory.
pub fn parse_y4m(data: &[u8]) -> Result<VideoClip> {
    let (header, mut pos) = parse_header(data)?;
    let bytes_per_sample = if header.bit_depth > 8 { 2 } else { 1 };
    let luma_len = header.width * header.height * bytes_per_sample;
    let chroma_dims = header.layout.chroma_dims(header.width, header.height);
    let chroma_len = chroma_dims.map_or(0, |(w, h)| w * h * bytes_per_sample);

    let mut frames = Vec::new();
    while pos < data.len() {
        let index = frames.len();
        let rest = &data[pos..];
        if !rest.starts_with(FRAME) {
            let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len()).min(16);
            return Err(parse_error(pos, &rest[..end]));
        }
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(ClipError::TruncatedFrame(index))?;
        // "FRAME" may carry parameters but must be followed by a space or newline.
        if nl != FRAME.len() && rest[FRAME.len()] != b' ' {
            return Err(parse_error(pos, &rest[..nl]));
        }
        pos += nl + 1;
        let need = luma_len + 2 * chroma_len;
        if data.len() - pos < need {
            return Err(ClipError::TruncatedFrame(index));
        }
        let luma = read_plane(
            &data[pos..pos + luma_len],
            header.width,
            header.height,
            header.bit_depth,
        );
        pos += luma_len;
        let chroma = chroma_dims.map(|(cw, ch)| {
            let cb = read_plane(&data[pos..pos + chroma_len], cw, ch, header.bit_depth);
            let cr = read_plane(
                &data[pos + chroma_len..pos + 2 * chroma_len],
                cw,
                ch,
                header.bit_depth,
            );
            (cb, cr)
        });
        pos += 2 * chroma_len;
        frames.push(Frame::new(luma, chroma, header.bit_depth));
    }
    if frames.is_empty() {
        return Err(ClipError::TruncatedFrame(0));
    }
    VideoClip::new(header.width, header.height, header.fps, header.layout, frames)
}

pub fn read_y4m_file(path: impl AsRef<Path>) -> Result<VideoClip> {
    parse_y4m(&std::fs::read(path)?)
}

fn write_plane(out: &mut Vec<u8>, plane: &Plane, bit_depth: u8) {
    if bit_depth > 8 {
        let maxval = ((1u32 << bit_depth) - 1) as f32;
        for &v in plane.data() {
            let q = (v.clamp(0.0, 1.0) * maxval).round() as u16;
            out.extend_from_slice(&q.to_le_bytes());
        }
    } else {
        out.extend(
            plane
                .data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
}

/// Serializes a clip as YUV4MPEG2, quantizing at the first frame's source bit depth.
///
/// Grayscale frames in a chroma layout are written with neutral chroma.
pub fn write_y4m(clip: &VideoClip, mut out: impl Write) -> Result<()> {
    let bit_depth = clip.frame(0).source_bit_depth();
    let mut buf = format!(
        "YUV4MPEG2 W{} H{} F{} Ip A1:1 C{}\n",
        clip.width(),
        clip.height(),
        clip.fps(),
        colorspace_tag(clip.layout(), bit_depth)
    )
    .into_bytes();
    let chroma_dims = clip.layout().chroma_dims(clip.width(), clip.height());
    for frame in clip.frames() {
        buf.extend_from_slice(b"FRAME\n");
        write_plane(&mut buf, frame.luma(), bit_depth);
        if let Some((cw, ch)) = chroma_dims {
            match frame.chroma() {
                Some(c) => {
                    write_plane(&mut buf, &c.cb, bit_depth);
                    write_plane(&mut buf, &c.cr, bit_depth);
                }
                None => {
                    let neutral = Plane::filled(cw, ch, 0.5);
                    write_plane(&mut buf, &neutral, bit_depth);
                    write_plane(&mut buf, &neutral, bit_depth);
                }
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}
