use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChromaLayout, Chroma, ClipSpec, Fps, Frame, Plane, VideoClip};

/// Content generator for [`synth_clip`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPattern {
    /// Every luma sample equals the value.
    Constant(f32),
    /// Diagonal ramp from 0 at the top-left to 1 at the bottom-right.
    Gradient,
    /// Independent uniform samples per frame.
    Noise(u64),
}

pub(crate) fn frame_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn noise_plane(width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.random::<f32>()).collect();
    Plane::from_vec(width, height, data)
}

/// Generates a deterministic 4:2:0 clip with the exact dimensions and frame count of `spec`.
///
/// Panics if any dimension of `spec` is zero.
pub fn synth_clip(spec: &ClipSpec, pattern: SynthPattern) -> VideoClip {
    assert!(
        spec.width > 0 && spec.height > 0 && spec.frame_count > 0,
        "clip spec {spec:?} has an empty dimension"
    );
    let (w, h) = (spec.width, spec.height);
    let layout = ChromaLayout::Yuv420;
    let (cw, ch) = layout.chroma_dims(w, h).expect("4:2:0 has chroma");
    let neutral = || Chroma {
        cb: Arc::new(Plane::filled(cw, ch, 0.5)),
        cr: Arc::new(Plane::filled(cw, ch, 0.5)),
    };

    let frames = match pattern {
        SynthPattern::Constant(v) => {
            let luma = Arc::new(Plane::filled(w, h, v));
            let chroma = neutral();
            vec![Frame::from_shared(luma, Some(chroma), 8); spec.frame_count]
        }
        SynthPattern::Gradient => {
            let span = (w + h).saturating_sub(2).max(1) as f32;
            let luma = Arc::new(Plane::from_fn(w, h, |x, y| {
                if x + y + 2 == w + h {
                    1.0
                } else {
                    (x + y) as f32 / span
                }
            }));
            let chroma = neutral();
            vec![Frame::from_shared(luma, Some(chroma), 8); spec.frame_count]
        }
        SynthPattern::Noise(seed) => (0..spec.frame_count)
            .into_par_iter()
            .map(|i| {
                let s = frame_seed(seed, i);
                Frame::new(
                    noise_plane(w, h, s),
                    Some((
                        noise_plane(cw, ch, s.wrapping_add(1)),
                        noise_plane(cw, ch, s.wrapping_add(2)),
                    )),
                    8,
                )
            })
            .collect(),
    };
    VideoClip::new(w, h, Fps::integer(30), layout, frames).expect("synthetic clip is valid")
}
