//! Temporal frame selection and spatial transforms.
//!
//! Temporal plans are pure functions of `(frame_count, fps, mode)`. Spatial
//! transforms operate on single planes; [`sample_view`] applies one to every
//! frame of a plan, seeding any randomness per frame as `seed ^ frame_index`
//! so parallel and serial execution agree.

mod spatial;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip_io::{Fps, VideoClip};

pub use spatial::{
    fragment_offsets, fragment_sample, pad_to_square, resize_bilinear, sample_view, SampledView,
    SpatialTransform, ViewFrame,
};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("need at least {target} sampled frames, have {available}")]
    InsufficientFrames { available: usize, target: usize },
    #[error("source {width}x{height} is smaller than the {min}x{min} fragment lattice")]
    SourceTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("unknown temporal mode {0:?}")]
    UnknownMode(String),
    #[error("frame index {index} out of range for a {frame_count}-frame clip")]
    IndexOutOfRange { index: usize, frame_count: usize },
}

/// Frame-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalMode {
    /// First frame of every 30-frame block.
    OnePer30,
    /// Offsets 0 and 15 of every 30-frame block.
    TwoPer30,
    /// First frame of every second.
    OneFps,
    /// Five evenly spaced frames per second.
    FiveFps,
    All,
    /// One frame per second, then an end-weighted subset of `target` of those.
    FrankenstoneReduce { target: usize },
}

impl TemporalMode {
    pub const FRANKENSTONE: TemporalMode = TemporalMode::FrankenstoneReduce { target: 5 };
}

impl fmt::Display for TemporalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalMode::OnePer30 => f.write_str("one_per_30"),
            TemporalMode::TwoPer30 => f.write_str("two_per_30"),
            TemporalMode::OneFps => f.write_str("one_fps"),
            TemporalMode::FiveFps => f.write_str("five_fps"),
            TemporalMode::All => f.write_str("all"),
            TemporalMode::FrankenstoneReduce { target: 5 } => f.write_str("frankenstone_reduce"),
            TemporalMode::FrankenstoneReduce { target } => {
                write!(f, "frankenstone_reduce:{target}")
            }
        }
    }
}

impl FromStr for TemporalMode {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "one_per_30" => TemporalMode::OnePer30,
            "two_per_30" => TemporalMode::TwoPer30,
            "one_fps" => TemporalMode::OneFps,
            "five_fps" => TemporalMode::FiveFps,
            "all" => TemporalMode::All,
            "frankenstone_reduce" => TemporalMode::FRANKENSTONE,
            other => match other.strip_prefix("frankenstone_reduce:") {
                Some(t) => match t.parse::<usize>() {
                    Ok(target) if target >= 1 => TemporalMode::FrankenstoneReduce { target },
                    _ => return Err(SamplingError::UnknownMode(s.to_string())),
                },
                None => return Err(SamplingError::UnknownMode(s.to_string())),
            },
        })
    }
}

impl Serialize for TemporalMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TemporalMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered, unique frame indices chosen by a [`TemporalMode`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalPlan {
    pub mode: TemporalMode,
    pub indices: Vec<usize>,
}

impl TemporalPlan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks that every index is in range for a clip of `frame_count` frames.
    pub fn validate(&self, frame_count: usize) -> Result<(), SamplingError> {
        match self.indices.iter().find(|&&i| i >= frame_count) {
            Some(&index) => Err(SamplingError::IndexOutOfRange { index, frame_count }),
            None => Ok(()),
        }
    }
}

const BLOCK: usize = 30;

/// Indices at the start of each whole second, i.e. the first frame whose
/// timestamp is at or after `k / per_second` seconds.
fn per_second(frame_count: usize, fps: Fps, per_second: u64) -> Vec<usize> {
    let num = fps.num as u64;
    let den = fps.den as u64 * per_second;
    let mut out: Vec<usize> = Vec::new();
    for k in 0u64.. {
        let idx = (k * num).div_ceil(den) as usize;
        if idx >= frame_count {
            break;
        }
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

/// Computes a plan for a clip with `frame_count` frames at `fps`.
pub fn plan_indices(frame_count: usize, fps: Fps, mode: TemporalMode) -> Vec<usize> {
    match mode {
        TemporalMode::OnePer30 => (0..frame_count).step_by(BLOCK).collect(),
        TemporalMode::TwoPer30 => {
            let mut out = Vec::new();
            for start in (0..frame_count).step_by(BLOCK) {
                let len = (frame_count - start).min(BLOCK);
                out.push(start);
                // Partial trailing blocks place the second frame at their midpoint.
                let offset = (BLOCK / 2).min(len / 2);
                if offset > 0 {
                    out.push(start + offset);
                }
            }
            out
        }
        TemporalMode::OneFps => per_second(frame_count, fps, 1),
        TemporalMode::FiveFps => per_second(frame_count, fps, 5),
        TemporalMode::All => (0..frame_count).collect(),
        TemporalMode::FrankenstoneReduce { target } => {
            let seconds = per_second(frame_count, fps, 1);
            match frankenstone_subset(seconds.len(), target) {
                Ok(picks) => picks.into_iter().map(|j| seconds[j]).collect(),
                // Clips shorter than `target` seconds keep every per-second frame.
                Err(_) => seconds,
            }
        }
    }
}

pub fn temporal_sample(clip: &VideoClip, mode: TemporalMode) -> TemporalPlan {
    TemporalPlan {
        mode,
        indices: plan_indices(clip.frame_count(), clip.fps(), mode),
    }
}

/// Picks `target` of `available` sampled frames, denser toward the end.
///
/// Index `j` is `round(m * (1 - ((t - j) / t)^1.5))`, clamped to `m - 1`;
/// collisions are resolved by shifting forward, then back from the end if
/// that overruns.
pub fn frankenstone_subset(available: usize, target: usize) -> Result<Vec<usize>, SamplingError> {
    if target == 0 || available < target {
        return Err(SamplingError::InsufficientFrames { available, target });
    }
    if available == target {
        return Ok((0..target).collect());
    }
    let m = available as f64;
    let t = target as f64;
    let mut idx: Vec<usize> = (0..target)
        .map(|j| {
            let frac = ((t - j as f64) / t).powf(1.5);
            ((m * (1.0 - frac)).round() as usize).min(available - 1)
        })
        .collect();
    for j in 1..target {
        if idx[j] <= idx[j - 1] {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let mut ceiling = available;
    for j in (0..target).rev() {
        if idx[j] >= ceiling {
            idx[j] = ceiling - 1;
        }
        ceiling = idx[j];
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(n: usize, fps: u32, mode: TemporalMode) -> Vec<usize> {
        plan_indices(n, Fps::integer(fps), mode)
    }

    #[test]
    fn one_per_30_sixty_frames() {
        assert_eq!(plan(60, 30, TemporalMode::OnePer30), vec![0, 30]);
        assert_eq!(plan(61, 30, TemporalMode::OnePer30), vec![0, 30, 60]);
    }

    #[test]
    fn two_per_30_sixty_frames() {
        assert_eq!(plan(60, 30, TemporalMode::TwoPer30), vec![0, 15, 30, 45]);
    }

    #[test]
    fn two_per_30_partial_block() {
        assert_eq!(plan(40, 30, TemporalMode::TwoPer30), vec![0, 15, 30, 35]);
        assert_eq!(plan(31, 30, TemporalMode::TwoPer30), vec![0, 15, 30]);
        assert_eq!(plan(1, 30, TemporalMode::TwoPer30), vec![0]);
        assert_eq!(plan(2, 30, TemporalMode::TwoPer30), vec![0, 1]);
    }

    #[test]
    fn one_fps() {
        assert_eq!(plan(30, 30, TemporalMode::OneFps), vec![0]);
        assert_eq!(plan(90, 30, TemporalMode::OneFps), vec![0, 30, 60]);
        // 29.97 fps: second k starts at frame ceil(k * 29.97).
        let ntsc = Fps::new(30000, 1001).unwrap();
        assert_eq!(plan_indices(91, ntsc, TemporalMode::OneFps), vec![0, 30, 60, 90]);
        assert_eq!(plan(600, 30, TemporalMode::OneFps).len(), 20);
    }

    #[test]
    fn five_fps() {
        assert_eq!(plan(30, 30, TemporalMode::FiveFps), vec![0, 6, 12, 18, 24]);
        assert_eq!(plan(10, 25, TemporalMode::FiveFps), vec![0, 5]);
        // Fewer than five frames per second keeps every frame once.
        assert_eq!(plan(6, 3, TemporalMode::FiveFps), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn frankenstone_reduce_twenty_seconds() {
        let p = plan(600, 30, TemporalMode::FRANKENSTONE);
        assert_eq!(p, vec![0, 180, 330, 450, 540]);
        assert_eq!(plan(60, 30, TemporalMode::FRANKENSTONE), vec![0, 30]);
    }

    #[test]
    fn subset_examples() {
        assert_eq!(frankenstone_subset(20, 5).unwrap(), vec![0, 6, 11, 15, 18]);
        assert_eq!(frankenstone_subset(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(frankenstone_subset(7, 1).unwrap(), vec![0]);
        assert_eq!(
            frankenstone_subset(4, 5),
            Err(SamplingError::InsufficientFrames {
                available: 4,
                target: 5
            })
        );
    }

    #[test]
    fn subset_m10_matches_formula() {
        // round(10 * (1 - ((5 - j) / 5)^1.5)) evaluated independently.
        let expected: Vec<usize> = [1.0f64, 0.8, 0.6, 0.4, 0.2]
            .iter()
            .map(|r: &f64| (10.0 * (1.0 - r * r.sqrt())).round() as usize)
            .collect();
        assert_eq!(expected, vec![0, 3, 5, 7, 9]);
        assert_eq!(frankenstone_subset(10, 5).unwrap(), expected);
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in [
            TemporalMode::OnePer30,
            TemporalMode::TwoPer30,
            TemporalMode::OneFps,
            TemporalMode::FiveFps,
            TemporalMode::All,
            TemporalMode::FRANKENSTONE,
            TemporalMode::FrankenstoneReduce { target: 3 },
        ] {
            assert_eq!(mode.to_string().parse::<TemporalMode>().unwrap(), mode);
        }
        assert!("every_other".parse::<TemporalMode>().is_err());
    }

    #[test]
    fn plan_json_shape() {
        let p = TemporalPlan {
            mode: TemporalMode::OnePer30,
            indices: vec![0, 30],
        };
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"mode":"one_per_30","indices":[0,30]}"#
        );
        let back: TemporalPlan = serde_json::from_str(r#"{"mode":"frankenstone_reduce","indices":[0,6]}"#).unwrap();
        assert_eq!(back.mode, TemporalMode::FRANKENSTONE);
    }

    #[test]
    fn plan_validation() {
        let p = TemporalPlan {
            mode: TemporalMode::All,
            indices: vec![0, 5],
        };
        assert!(p.validate(6).is_ok());
        assert_eq!(
            p.validate(5),
            Err(SamplingError::IndexOutOfRange {
                index: 5,
                frame_count: 5
            })
        );
    }

    fn mode_strategy() -> impl Strategy<Value = TemporalMode> {
        prop_oneof![
            Just(TemporalMode::OnePer30),
            Just(TemporalMode::TwoPer30),
            Just(TemporalMode::OneFps),
            Just(TemporalMode::FiveFps),
            Just(TemporalMode::All),
            (1usize..8).prop_map(|target| TemporalMode::FrankenstoneReduce { target }),
        ]
    }

    proptest! {
        #[test]
        fn plans_sorted_unique_in_range(
            n in 1usize..400,
            num in 1u32..120_000,
            den in 1u32..2000,
            mode in mode_strategy(),
        ) {
            let fps = Fps::new(num, den).unwrap();
            let idx = plan_indices(n, fps, mode);
            prop_assert!(!idx.is_empty());
            prop_assert_eq!(idx[0], 0);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < n));
            prop_assert_eq!(plan_indices(n, fps, mode), idx);
        }

        #[test]
        fn block_counts(n in 1usize..1000) {
            prop_assert_eq!(plan_indices(n, Fps::integer(30), TemporalMode::OnePer30).len(), n.div_ceil(30));
            let two = plan_indices(n, Fps::integer(30), TemporalMode::TwoPer30).len();
            let expected = (2 * n.div_ceil(30)).min(n) - usize::from(n % 30 == 1 && n > 1);
            prop_assert_eq!(two, expected);
        }

        #[test]
        fn subset_strict_in_range(m in 1usize..2000, t in 1usize..12) {
            prop_assume!(m >= t);
            let idx = frankenstone_subset(m, t).unwrap();
            prop_assert_eq!(idx.len(), t);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < m));
        }
    }
}
