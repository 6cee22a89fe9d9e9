//! Clip ingestion and the canonical in-memory representation.
//!
//! Every clip is stored as planar, full-range samples normalized to `[0, 1]`
//! (8-bit sources divide by 255, 10-bit sources by 1023). Chroma planes keep
//! their native subsampling; RGB is only materialized when a color feature
//! asks for it.

mod plane;
mod pnm;
mod synth;
mod y4m;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plane::Plane;
pub use pnm::{load_frame_dir, read_pnm, write_pgm, write_ppm, PnmImage};
pub use synth::{synth_clip, SynthPattern};
pub use y4m::{parse_y4m, read_y4m_file, write_y4m};

#[derive(Debug, Error)]
pub enum ClipError {
    #[error("malformed header at byte {position}: {token:?}")]
    Parse { position: usize, token: String },
    #[error("frame {0} is missing or truncated")]
    TruncatedFrame(usize),
    #[error("unsupported format tag {0:?}")]
    Unsupported(String),
    #[error("{} has dimensions that differ from the first frame", .0.display())]
    DimensionMismatch(PathBuf),
    #[error("no frames found in input")]
    EmptyInput,
    #[error("invalid clip: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ClipError>;

/// Frame rate as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(ClipError::Invalid(format!("frame rate {num}:{den}")));
        }
        Ok(Fps { num, den })
    }

    pub fn integer(fps: u32) -> Self {
        Fps::new(fps, 1).expect("integer frame rate must be positive")
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// Chroma sampling layout of a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChromaLayout {
    Mono,
    Yuv420,
    Yuv422,
    Yuv444,
}

impl ChromaLayout {
    /// Chroma plane dimensions for a luma plane of `width` x `height`.
    pub fn chroma_dims(self, width: usize, height: usize) -> Option<(usize, usize)> {
        match self {
            ChromaLayout::Mono => None,
            ChromaLayout::Yuv420 => Some((width.div_ceil(2), height.div_ceil(2))),
            ChromaLayout::Yuv422 => Some((width.div_ceil(2), height)),
            ChromaLayout::Yuv444 => Some((width, height)),
        }
    }
}

/// Blue- and red-difference planes, both present or both absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Chroma {
    pub cb: Arc<Plane>,
    pub cr: Arc<Plane>,
}

/// Full-resolution RGB planes, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rgb {
    pub r: Plane,
    pub g: Plane,
    pub b: Plane,
}

impl Rgb {
    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }
}

// BT.709 luma coefficients.
const KR: f32 = 0.2126;
const KB: f32 = 0.0722;
const KG: f32 = 1.0 - KR - KB;

/// Converts full-range BT.709 Y'CbCr (chroma centered at 0.5) to RGB.
pub fn ycbcr_to_rgb(y: f32, cb: f32, cr: f32) -> (f32, f32, f32) {
    let pb = cb - 0.5;
    let pr = cr - 0.5;
    let r = y + 2.0 * (1.0 - KR) * pr;
    let b = y + 2.0 * (1.0 - KB) * pb;
    let g = (y - KR * r - KB * b) / KG;
    (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
}

/// Inverse of [`ycbcr_to_rgb`] for in-gamut RGB.
pub fn rgb_to_ycbcr(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let y = KR * r + KG * g + KB * b;
    let cb = (b - y) / (2.0 * (1.0 - KB)) + 0.5;
    let cr = (r - y) / (2.0 * (1.0 - KR)) + 0.5;
    (y.clamp(0.0, 1.0), cb.clamp(0.0, 1.0), cr.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    luma: Arc<Plane>,
    chroma: Option<Chroma>,
    source_bit_depth: u8,
}

impl Frame {
    pub fn new(luma: Plane, chroma: Option<(Plane, Plane)>, source_bit_depth: u8) -> Self {
        Frame::from_shared(
            Arc::new(luma),
            chroma.map(|(cb, cr)| Chroma {
                cb: Arc::new(cb),
                cr: Arc::new(cr),
            }),
            source_bit_depth,
        )
    }

    pub fn from_shared(luma: Arc<Plane>, chroma: Option<Chroma>, source_bit_depth: u8) -> Self {
        Frame {
            luma,
            chroma,
            source_bit_depth,
        }
    }

    pub fn gray(luma: Plane) -> Self {
        Frame::new(luma, None, 8)
    }

    pub fn luma(&self) -> &Plane {
        &self.luma
    }

    pub fn chroma(&self) -> Option<&Chroma> {
        self.chroma.as_ref()
    }

    pub fn source_bit_depth(&self) -> u8 {
        self.source_bit_depth
    }

    pub fn has_color(&self) -> bool {
        self.chroma.is_some()
    }

    /// Upsamples chroma (nearest neighbour) and converts to RGB.
    /// Returns `None` for grayscale frames.
    pub fn to_rgb(&self) -> Option<Rgb> {
        let chroma = self.chroma.as_ref()?;
        let (w, h) = (self.luma.width(), self.luma.height());
        let (cb, cr) = (&chroma.cb, &chroma.cr);
        // Same source pixel as `Plane::upsample_nearest`.
        let (cw, ch) = (cb.width(), cb.height());
        let fx = w.div_ceil(cw.max(1));
        let fy = h.div_ceil(ch.max(1));
        let cols: Vec<usize> = (0..w).map(|x| if cw == w { x } else { (x / fx).min(cw - 1) }).collect();
        let mut r = Plane::filled(w, h, 0.0);
        let mut g = Plane::filled(w, h, 0.0);
        let mut b = Plane::filled(w, h, 0.0);
        let rows = r
            .data_mut()
            .chunks_mut(w)
            .zip(g.data_mut().chunks_mut(w))
            .zip(b.data_mut().chunks_mut(w));
        for (y, ((out_r, out_g), out_b)) in rows.enumerate() {
            let cy = if ch == h { y } else { (y / fy).min(ch - 1) };
            let (row_b, row_r) = (cb.row(cy), cr.row(cy));
            for (x, (&l, &cx)) in self.luma.row(y).iter().zip(&cols).enumerate() {
                let (rr, gg, bb) = ycbcr_to_rgb(l, row_b[cx], row_r[cx]);
                out_r[x] = rr;
                out_g[x] = gg;
                out_b[x] = bb;
            }
        }
        Some(Rgb { r, g, b })
    }
}

/// Decoded clip. Immutable once built; frames share planes through `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    width: usize,
    height: usize,
    fps: Fps,
    layout: ChromaLayout,
    frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(
        width: usize,
        height: usize,
        fps: Fps,
        layout: ChromaLayout,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ClipError::Invalid(format!("dimensions {width}x{height}")));
        }
        if fps.num == 0 || fps.den == 0 {
            return Err(ClipError::Invalid(format!("frame rate {fps}")));
        }
        if frames.is_empty() {
            return Err(ClipError::EmptyInput);
        }
        let chroma_dims = layout.chroma_dims(width, height);
        for (i, f) in frames.iter().enumerate() {
            if f.luma.width() != width || f.luma.height() != height {
                return Err(ClipError::Invalid(format!(
                    "frame {i} luma is {}x{}, clip is {width}x{height}",
                    f.luma.width(),
                    f.luma.height()
                )));
            }
            match (&f.chroma, chroma_dims) {
                (None, _) => {}
                (Some(c), Some((cw, ch))) => {
                    if c.cb.width() != cw
                        || c.cb.height() != ch
                        || !c.cb.same_dims(&c.cr)
                    {
                        return Err(ClipError::Invalid(format!(
                            "frame {i} chroma does not match layout {layout:?}"
                        )));
                    }
                }
                (Some(_), None) => {
                    return Err(ClipError::Invalid(format!(
                        "frame {i} carries chroma in a mono clip"
                    )))
                }
            }
        }
        Ok(VideoClip {
            width,
            height,
            fps,
            layout,
            frames,
        })
    }

    /// Convenience constructor for luma-only clips.
    pub fn from_luma(planes: Vec<Plane>, fps: Fps) -> Result<Self> {
        let first = planes.first().ok_or(ClipError::EmptyInput)?;
        let (w, h) = (first.width(), first.height());
        VideoClip::new(
            w,
            h,
            fps,
            ChromaLayout::Mono,
            planes.into_iter().map(Frame::gray).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fps(&self) -> Fps {
        self.fps
    }

    pub fn layout(&self) -> ChromaLayout {
        self.layout
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// A canonical benchmarking payload: frame count and resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub label: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
}

impl ClipSpec {
    pub fn new(label: impl Into<String>, frame_count: usize, width: usize, height: usize) -> Self {
        ClipSpec {
            label: label.into(),
            frame_count,
            width,
            height,
        }
    }

    /// 30 frames at 1920x1080.
    pub fn fhd_30() -> Self {
        ClipSpec::new("30-FHD", 30, 1920, 1080)
    }

    /// 60 frames at 1280x720.
    pub fn hd_60() -> Self {
        ClipSpec::new("60-HD", 60, 1280, 720)
    }

    /// 30 frames at 3840x2160.
    pub fn uhd_30() -> Self {
        ClipSpec::new("30-4K", 30, 3840, 2160)
    }

    pub fn canonical() -> [ClipSpec; 3] {
        [ClipSpec::fhd_30(), ClipSpec::hd_60(), ClipSpec::uhd_30()]
    }

    /// Looks up one of the canonical specs by label.
    pub fn by_label(label: &str) -> Option<ClipSpec> {
        ClipSpec::canonical().into_iter().find(|s| s.label == label)
    }
}
