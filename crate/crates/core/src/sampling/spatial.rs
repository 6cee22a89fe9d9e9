use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SamplingError, TemporalPlan};
use crate::clip_io::{Plane, Rgb, VideoClip};

/// Per-frame spatial transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialTransform {
    Resize { width: usize, height: usize },
    PadSquareThenResize { side: usize },
    Fragment { grid: usize, patch: usize, seed: u64 },
}

impl SpatialTransform {
    /// 7x7 lattice of 32-pixel patches, 224x224 output.
    pub fn fragment(seed: u64) -> Self {
        SpatialTransform::Fragment {
            grid: 7,
            patch: 32,
            seed,
        }
    }

    pub fn output_dims(&self) -> (usize, usize) {
        match *self {
            SpatialTransform::Resize { width, height } => (width, height),
            SpatialTransform::PadSquareThenResize { side } => (side, side),
            SpatialTransform::Fragment { grid, patch, .. } => (grid * patch, grid * patch),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SpatialTransform::Fragment { grid, patch, .. } => {
                SpatialTransform::Fragment { grid, patch, seed }
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let (w, h) = self.output_dims();
        if w == 0 || h == 0 {
            return Err(SamplingError::InvalidTransform(self.to_string()));
        }
        Ok(())
    }
}

impl fmt::Display for SpatialTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialTransform::Resize { width, height } => write!(f, "resize:{width}x{height}"),
            SpatialTransform::PadSquareThenResize { side } => write!(f, "pad_square:{side}"),
            SpatialTransform::Fragment { grid, patch, .. } => write!(f, "fragment:{grid}x{patch}"),
        }
    }
}

/// Parses `resize:WxH`, `pad_square:S`, `fragment` or `fragment:GRIDxPATCH`.
/// Fragment seeds default to 0; see [`SpatialTransform::with_seed`].
impl FromStr for SpatialTransform {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SamplingError::InvalidTransform(s.to_string());
        let pair = |v: &str| -> Result<(usize, usize), SamplingError> {
            let (a, b) = v.split_once('x').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let t = match (kind, arg) {
            ("resize", Some(a)) => {
                let (width, height) = pair(a)?;
                SpatialTransform::Resize { width, height }
            }
            ("pad_square", Some(a)) => SpatialTransform::PadSquareThenResize {
                side: a.parse().map_err(|_| bad())?,
            },
            ("fragment", None) => SpatialTransform::fragment(0),
            ("fragment", Some(a)) => {
                let (grid, patch) = pair(a)?;
                SpatialTransform::Fragment {
                    grid,
                    patch,
                    seed: 0,
                }
            }
            _ => return Err(bad()),
        };
        t.validate()?;
        Ok(t)
    }
}

/// Source coordinate and blend weight per output coordinate, half-pixel centers.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f64) -> f32 {
    let v = (a as f64 + t * (b as f64 - a as f64)) as f32;
    v.clamp(a.min(b), a.max(b))
}

/// Separable bilinear resampling with half-pixel centers.
pub fn resize_bilinear(plane: &Plane, out_w: usize, out_h: usize) -> Plane {
    assert!(out_w > 0 && out_h > 0, "resize target must be non-empty");
    let (w, h) = (plane.width(), plane.height());
    if w == out_w && h == out_h {
        return plane.clone();
    }
    let xt = taps(w, out_w);
    let mut horiz = Plane::filled(out_w, h, 0.0);
    for y in 0..h {
        let src = plane.row(y);
        for (dst, &(x0, x1, t)) in horiz.row_mut(y).iter_mut().zip(&xt) {
            *dst = lerp(src[x0], src[x1], t);
        }
    }
    let yt = taps(h, out_h);
    let mut out = Plane::filled(out_w, out_h, 0.0);
    for (y, &(y0, y1, t)) in yt.iter().enumerate() {
        let (r0, r1) = (horiz.row(y0), horiz.row(y1));
        for (x, dst) in out.row_mut(y).iter_mut().enumerate() {
            *dst = lerp(r0[x], r1[x], t);
        }
    }
    out
}

/// Centers the plane on a `max(w, h)` square filled with `fill`.
pub fn pad_to_square(plane: &Plane, fill: f32) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let side = w.max(h);
    if w == h {
        return plane.clone();
    }
    let (left, top) = ((side - w) / 2, (side - h) / 2);
    let mut out = Plane::filled(side, side, fill);
    for y in 0..h {
        out.row_mut(top + y)[left..left + w].copy_from_slice(plane.row(y));
    }
    out
}

/// Start and length of region `i` when `n` pixels are split into `grid` regions.
/// The last region absorbs the remainder.
fn region(n: usize, grid: usize, i: usize) -> (usize, usize) {
    let base = n / grid;
    let start = i * base;
    let len = if i + 1 == grid { n - start } else { base };
    (start, len)
}

/// Top-left corner of the window drawn from each lattice region, row-major.
pub fn fragment_offsets(
    width: usize,
    height: usize,
    grid: usize,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>, SamplingError> {
    let min = grid * patch;
    if grid == 0 || patch == 0 {
        return Err(SamplingError::InvalidTransform(format!("fragment:{grid}x{patch}")));
    }
    if width < min || height < min {
        return Err(SamplingError::SourceTooSmall { width, height, min });
    }
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        let (y0, ylen) = region(height, grid, i);
        for j in 0..grid {
            let (x0, xlen) = region(width, grid, j);
            let dx = rng.random_range(0..=xlen - patch);
            let dy = rng.random_range(0..=ylen - patch);
            out.push((x0 + dx, y0 + dy));
        }
    }
    Ok(out)
}

fn assemble(plane: &Plane, offsets: &[(usize, usize)], grid: usize, patch: usize) -> Plane {
    let side = grid * patch;
    let mut out = Plane::filled(side, side, 0.0);
    for (cell, &(sx, sy)) in offsets.iter().enumerate() {
        let (i, j) = (cell / grid, cell % grid);
        for r in 0..patch {
            out.row_mut(i * patch + r)[j * patch..(j + 1) * patch]
                .copy_from_slice(&plane.row(sy + r)[sx..sx + patch]);
        }
    }
    out
}

/// Mosaics one random `patch`-sized window per lattice region into a
/// `(grid * patch)`-square plane, preserving region order.
pub fn fragment_sample(
    plane: &Plane,
    grid: usize,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<Plane, SamplingError> {
    let offsets = fragment_offsets(plane.width(), plane.height(), grid, patch, rng)?;
    Ok(assemble(plane, &offsets, grid, patch))
}

/// One transformed frame of a [`SampledView`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFrame {
    pub luma: Plane,
    pub rgb: Option<Rgb>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledView {
    pub frames: Vec<ViewFrame>,
    pub origin_indices: Vec<usize>,
    pub transform: SpatialTransform,
}

impl SampledView {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn apply(
    luma: &Plane,
    rgb: Option<Rgb>,
    transform: SpatialTransform,
    frame_index: usize,
) -> Result<ViewFrame, SamplingError> {
    let map_rgb = |rgb: Option<Rgb>, f: &dyn Fn(&Plane) -> Plane| {
        rgb.map(|c| Rgb {
            r: f(&c.r),
            g: f(&c.g),
            b: f(&c.b),
        })
    };
    Ok(match transform {
        SpatialTransform::Resize { width, height } => {
            let f = |p: &Plane| resize_bilinear(p, width, height);
            ViewFrame {
                luma: f(luma),
                rgb: map_rgb(rgb, &f),
            }
        }
        SpatialTransform::PadSquareThenResize { side } => {
            let f = |p: &Plane| resize_bilinear(&pad_to_square(p, 0.0), side, side);
            ViewFrame {
                luma: f(luma),
                rgb: map_rgb(rgb, &f),
            }
        }
        SpatialTransform::Fragment { grid, patch, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame_index as u64);
            let offsets = fragment_offsets(luma.width(), luma.height(), grid, patch, &mut rng)?;
            let f = |p: &Plane| assemble(p, &offsets, grid, patch);
            ViewFrame {
                luma: f(luma),
                rgb: map_rgb(rgb, &f),
            }
        }
    })
}

/// Applies `transform` to every frame of `plan`, in parallel.
///
/// With `with_rgb`, color frames also carry transformed RGB planes. Fragment
/// windows are drawn from a generator seeded with `seed ^ frame_index`, and
/// the same windows are used for luma and RGB.
pub fn sample_view(
    clip: &VideoClip,
    plan: &TemporalPlan,
    transform: SpatialTransform,
    with_rgb: bool,
) -> Result<SampledView, SamplingError> {
    transform.validate()?;
    plan.validate(clip.frame_count())?;
    let frames = plan
        .indices
        .par_iter()
        .map(|&i| {
            let frame = clip.frame(i);
            let rgb = if with_rgb { frame.to_rgb() } else { None };
            apply(frame.luma(), rgb, transform, i)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SampledView {
        frames,
        origin_indices: plan.indices.clone(),
        transform,
    })
}
