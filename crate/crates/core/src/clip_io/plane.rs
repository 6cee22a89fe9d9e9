use std::fmt;

/// A single-channel image of normalized samples, stored row-major.
#[derive(Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    /// Wraps `data` as a `width` x `height` plane.
    ///
    /// Panics if the buffer length does not match the dimensions.
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "plane buffer of {} samples does not match {}x{}",
            data.len(),
            width,
            height
        );
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane::from_vec(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane::from_vec(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Sample at column `x`, row `y`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, y: usize) -> &mut [f32] {
        &mut self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn transpose(&self) -> Plane {
        Plane::from_fn(self.height, self.width, |x, y| self.at(y, x))
    }

    pub fn mirror_horizontal(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |x, y| self.at(self.width - 1 - x, y))
    }

    /// Nearest-neighbour upsampling by integer factors per axis, cropped to `width` x `height`.
    pub fn upsample_nearest(&self, width: usize, height: usize) -> Plane {
        if self.width == width && self.height == height {
            return self.clone();
        }
        let fx = width.div_ceil(self.width.max(1));
        let fy = height.div_ceil(self.height.max(1));
        Plane::from_fn(width, height, |x, y| {
            self.at((x / fx).min(self.width - 1), (y / fy).min(self.height - 1))
        })
    }
}

impl fmt::Debug for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plane")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_420_chroma() {
        let p = Plane::from_vec(2, 2, vec![0.0, 0.25, 0.5, 0.75]);
        let up = p.upsample_nearest(4, 4);
        assert_eq!(up.row(0), &[0.0, 0.0, 0.25, 0.25]);
        assert_eq!(up.row(3), &[0.5, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn upsample_odd_luma_dims() {
        // 5x3 luma with 3x2 chroma.
        let p = Plane::from_fn(3, 2, |x, y| (x + 3 * y) as f32);
        let up = p.upsample_nearest(5, 3);
        assert_eq!(up.row(0), &[0.0, 0.0, 1.0, 1.0, 2.0]);
        assert_eq!(up.row(2), &[3.0, 3.0, 4.0, 4.0, 5.0]);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let p = Plane::from_fn(3, 5, |x, y| (x * 7 + y) as f32);
        assert_eq!(p.transpose().transpose(), p);
        assert_eq!(p.transpose().at(4, 2), p.at(2, 4));
    }
}
