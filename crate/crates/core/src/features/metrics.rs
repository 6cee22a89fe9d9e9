//! Per-frame signal measures on normalized planes.
//!
//! All statistics use population (1/N) moments accumulated in `f64`, in row-major order.

use super::FeatureError;
use crate::clip_io::{Plane, Rgb};

fn require_min(plane: &Plane, min: usize) -> Result<(), FeatureError> {
    if plane.width() < min || plane.height() < min {
        return Err(FeatureError::PlaneTooSmall {
            width: plane.width(),
            height: plane.height(),
            min,
        });
    }
    Ok(())
}

fn require_same(a: &Plane, b: &Plane) -> Result<(), FeatureError> {
    if !a.same_dims(b) {
        return Err(FeatureError::DimensionMismatch {
            left: (a.width(), a.height()),
            right: (b.width(), b.height()),
        });
    }
    Ok(())
}

/// Running mean/variance over a fixed iteration order.
#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.sum / self.n
        }
    }

    fn variance(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.n - m * m).max(0.0)
    }
}

/// Two-pass population variance; stable for the constant-plane cases that must come out exactly 0.
fn variance_of(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0.0;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1.0;
        sum += v;
    }
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = sum / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// `f(neighbourhood)` at every interior pixel, row-major.
fn interior(plane: &Plane, f: impl Fn([[f64; 3]; 3]) -> f64) -> Vec<f64> {
    let (w, h) = (plane.width(), plane.height());
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        let (r0, r1, r2) = (plane.row(y - 1), plane.row(y), plane.row(y + 1));
        for ((a, b), c) in r0.windows(3).zip(r1.windows(3)).zip(r2.windows(3)) {
            let row = |r: &[f32]| [r[0] as f64, r[1] as f64, r[2] as f64];
            out.push(f([row(a), row(b), row(c)]));
        }
    }
    out
}

fn sobel_magnitude(n: [[f64; 3]; 3]) -> f64 {
    let gx = (n[0][2] + 2.0 * n[1][2] + n[2][2]) - (n[0][0] + 2.0 * n[1][0] + n[2][0]);
    let gy = (n[2][0] + 2.0 * n[2][1] + n[2][2]) - (n[0][0] + 2.0 * n[0][1] + n[0][2]);
    (gx * gx + gy * gy).sqrt()
}

fn laplacian(n: [[f64; 3]; 3]) -> f64 {
    n[0][1] + n[1][0] + n[1][2] + n[2][1] - 4.0 * n[1][1]
}

/// Spatial information: standard deviation of the Sobel gradient magnitude over interior pixels.
pub fn si(luma: &Plane) -> Result<f64, FeatureError> {
    require_min(luma, 3)?;
    Ok(variance_of(interior(luma, sobel_magnitude).iter().copied()).1.sqrt())
}

/// Temporal information: standard deviation of `current - previous`.
pub fn ti(current: &Plane, previous: &Plane) -> Result<f64, FeatureError> {
    require_same(current, previous)?;
    if current.is_empty() {
        return Err(FeatureError::PlaneTooSmall {
            width: 0,
            height: 0,
            min: 1,
        });
    }
    let diffs = current
        .data()
        .iter()
        .zip(previous.data())
        .map(|(&a, &b)| a as f64 - b as f64);
    Ok(variance_of(diffs).1.sqrt())
}

/// Hasler-Süsstrunk colorfulness on `[0, 1]` RGB.
pub fn colorfulness(rgb: &Rgb) -> f64 {
    let rg = || rgb.r.data().iter().zip(rgb.g.data()).map(|(&r, &g)| r as f64 - g as f64);
    let yb = || {
        rgb.r
            .data()
            .iter()
            .zip(rgb.g.data())
            .zip(rgb.b.data())
            .map(|((&r, &g), &b)| 0.5 * (r as f64 + g as f64) - b as f64)
    };
    let (mu_rg, var_rg) = variance_of(rg());
    let (mu_yb, var_yb) = variance_of(yb());
    (var_rg + var_yb).sqrt() + 0.3 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt()
}

pub fn avg_luminance(luma: &Plane) -> Result<f64, FeatureError> {
    if luma.is_empty() {
        return Err(FeatureError::PlaneTooSmall {
            width: luma.width(),
            height: luma.height(),
            min: 1,
        });
    }
    Ok(luma.mean())
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
pub fn sharpness(luma: &Plane) -> Result<f64, FeatureError> {
    require_min(luma, 3)?;
    Ok(variance_of(interior(luma, laplacian).iter().copied()).1)
}

/// RMS contrast: standard deviation of luma.
pub fn contrast(luma: &Plane) -> Result<f64, FeatureError> {
    if luma.is_empty() {
        return Err(FeatureError::PlaneTooSmall {
            width: luma.width(),
            height: luma.height(),
            min: 1,
        });
    }
    Ok(variance_of(luma.data().iter().map(|&v| v as f64)).1.sqrt())
}

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean SSIM over 8x8 windows placed every 4 pixels.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64, FeatureError> {
    require_same(a, b)?;
    require_min(a, SSIM_WINDOW)?;
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in (0..=h - SSIM_WINDOW).step_by(SSIM_STRIDE) {
        for x0 in (0..=w - SSIM_WINDOW).step_by(SSIM_STRIDE) {
            let mut ma = Moments::default();
            let mut mb = Moments::default();
            let mut sab = 0.0;
            for y in y0..y0 + SSIM_WINDOW {
                let (ra, rb) = (&a.row(y)[x0..x0 + SSIM_WINDOW], &b.row(y)[x0..x0 + SSIM_WINDOW]);
                for (&va, &vb) in ra.iter().zip(rb) {
                    let (va, vb) = (va as f64, vb as f64);
                    ma.push(va);
                    mb.push(vb);
                    sab += va * vb;
                }
            }
            let n = ma.n;
            let (mua, mub) = (ma.mean(), mb.mean());
            let cov = sab / n - mua * mub;
            let num = (2.0 * mua * mub + C1) * (2.0 * cov + C2);
            let den = (mua * mua + mub * mub + C1) * (ma.variance() + mb.variance() + C2);
            total += num / den;
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(-1.0, 1.0))
}
