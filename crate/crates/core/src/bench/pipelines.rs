//! Named pipelines for the harness and the `bench` command.

use super::{BenchError, Pipeline, PipelineDescriptor, RunError, Scope, Stage, StageOp};
use crate::clip_io::VideoClip;
use crate::corpus::{CorpusConfig, generate_corpus};
use crate::features::{FEATURE_NAMES, extract_clip_features, extract_view_features};
use crate::regressors::{BranchNet, ForestConfig, ForestModel, NetDims, fit_forest, predict_forest};
use crate::sampling::{SpatialTransform, TemporalMode, sample_view, temporal_sample};

pub const PIPELINE_NAMES: [&str; 4] = ["identity", "features", "features_forest", "fragments_net"];

/// Scores a clip by its frame count; measures harness overhead only.
pub struct IdentityPipeline;

impl Pipeline for IdentityPipeline {
    fn name(&self) -> &str {
        "identity"
    }

    fn descriptor(&self, _clip: &VideoClip) -> PipelineDescriptor {
        PipelineDescriptor::default()
    }

    fn run(&self, clip: &VideoClip) -> Result<f64, RunError> {
        Ok(clip.frame_count() as f64)
    }
}

/// Per-frame stages of native-resolution feature extraction on `ps` samples.
fn feature_stages(ps: usize, color: bool) -> Vec<Stage> {
    let mut stages = Vec::new();
    if color {
        // Four multiplies per pixel for the YCbCr to RGB matrix.
        stages.push(Stage::per_frame(StageOp::Elementwise { n: 4 * ps }));
    }
    for name in FEATURE_NAMES {
        stages.push(Stage::per_frame(StageOp::Feature {
            name: name.to_string(),
            plane_size: ps,
        }));
    }
    stages
}

/// Five frames per second, all features at native resolution. Scores by mean
/// luminance.
pub struct FeaturePipeline {
    pub mode: TemporalMode,
}

impl Default for FeaturePipeline {
    fn default() -> Self {
        FeaturePipeline {
            mode: TemporalMode::FiveFps,
        }
    }
}

impl Pipeline for FeaturePipeline {
    fn name(&self) -> &str {
        "features"
    }

    fn descriptor(&self, clip: &VideoClip) -> PipelineDescriptor {
        let frames = temporal_sample(clip, self.mode).indices.len();
        let ps = clip.width() * clip.height();
        PipelineDescriptor {
            stages: feature_stages(ps, clip.frame(0).has_color()),
            frames_per_clip: frames,
        }
    }

    fn run(&self, clip: &VideoClip) -> Result<f64, RunError> {
        let plan = temporal_sample(clip, self.mode);
        Ok(extract_clip_features(clip, &plan)?.avg_luminance)
    }
}

/// Native-resolution features followed by a random forest.
pub struct FeatureForestPipeline {
    pub features: FeaturePipeline,
    pub forest: ForestModel,
}

impl FeatureForestPipeline {
    /// Fits the forest on a small synthetic corpus before any timing.
    pub fn fitted(seed: u64) -> Result<Self, BenchError> {
        let corpus = generate_corpus(&CorpusConfig {
            clips: 120,
            seed,
            ..Default::default()
        })
        .map_err(|e| BenchError::Setup(e.to_string()))?;
        let forest = fit_forest(
            &corpus.matrix(),
            &corpus.mos(),
            &ForestConfig {
                seed,
                ..Default::default()
            },
        )
        .map_err(|e| BenchError::Setup(e.to_string()))?;
        Ok(FeatureForestPipeline {
            features: FeaturePipeline::default(),
            forest,
        })
    }
}

impl Pipeline for FeatureForestPipeline {
    fn name(&self) -> &str {
        "features_forest"
    }

    /// Tree traversal is comparisons only, so the forest adds no MACs.
    fn descriptor(&self, clip: &VideoClip) -> PipelineDescriptor {
        self.features.descriptor(clip)
    }

    fn run(&self, clip: &VideoClip) -> Result<f64, RunError> {
        let plan = temporal_sample(clip, self.features.mode);
        let fv = extract_clip_features(clip, &plan)?;
        Ok(predict_forest(&self.forest, &fv.values())?)
    }

    fn tree_nodes(&self) -> Option<usize> {
        Some(self.forest.trees.iter().map(|t| t.nodes.len()).sum())
    }
}

/// One frame per 30, 7x7 fragment mosaic, view features, branch net.
pub struct FragmentNetPipeline {
    pub net: BranchNet,
    pub seed: u64,
}

impl FragmentNetPipeline {
    pub fn new(seed: u64) -> Self {
        FragmentNetPipeline {
            net: BranchNet::init(NetDims::default(), seed),
            seed,
        }
    }

    fn net_stages(&self) -> Vec<Stage> {
        let d = self.net.dims();
        let lin = |a, b, bias| {
            Stage::per_clip(StageOp::Linear {
                d_in: a,
                d_out: b,
                tokens: 1,
                bias,
            })
        };
        let mut s = vec![
            lin(d.semantic_in, d.hidden, true),
            lin(d.aesthetic_in, d.hidden, true),
            lin(d.technical_in, d.hidden, true),
        ];
        for _ in 0..2 {
            s.push(lin(d.hidden, d.gate, false));
            s.push(lin(d.hidden, d.gate, false));
            s.push(Stage::per_clip(StageOp::Elementwise { n: d.gate }));
            s.push(lin(d.gate, d.hidden, false));
        }
        for _ in 0..3 {
            s.push(lin(d.hidden, d.head_hidden, true));
            s.push(lin(d.head_hidden, 1, true));
        }
        s
    }
}

impl Pipeline for FragmentNetPipeline {
    fn name(&self) -> &str {
        "fragments_net"
    }

    fn descriptor(&self, clip: &VideoClip) -> PipelineDescriptor {
        let transform = SpatialTransform::fragment(self.seed);
        let (w, h) = transform.output_dims();
        let frames = temporal_sample(clip, TemporalMode::OnePer30).indices.len();
        let mut stages = vec![Stage {
            op: StageOp::Copy { n: w * h },
            scope: Scope::PerFrame,
        }];
        stages.extend(feature_stages(w * h, clip.frame(0).has_color()));
        stages.extend(self.net_stages());
        PipelineDescriptor {
            stages,
            frames_per_clip: frames,
        }
    }

    fn run(&self, clip: &VideoClip) -> Result<f64, RunError> {
        let plan = temporal_sample(clip, TemporalMode::OnePer30);
        let view = sample_view(clip, &plan, SpatialTransform::fragment(self.seed), true)?;
        let fv = extract_view_features(&view)?;
        let x = crate::regressors::Standardizer {
            mean: [0.0; 9],
            std: [1.0; 9],
        }
        .transform(&fv);
        Ok(self.net.forward(&x)?.1)
    }
}

/// Builds a pipeline by name; model-backed pipelines are fitted here.
pub fn reference_pipeline(name: &str, seed: u64) -> Result<Box<dyn Pipeline>, BenchError> {
    Ok(match name {
        "identity" => Box::new(IdentityPipeline),
        "features" => Box::new(FeaturePipeline::default()),
        "features_forest" => Box::new(FeatureForestPipeline::fitted(seed)?),
        "fragments_net" => Box::new(FragmentNetPipeline::new(seed)),
        other => return Err(BenchError::UnknownPipeline(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::param_count;
    use crate::clip_io::{ClipSpec, SynthPattern, synth_clip};

    #[test]
    fn fragment_net_params_match_net() {
        let p = FragmentNetPipeline::new(1);
        let clip = synth_clip(&ClipSpec::new("t", 30, 256, 256), SynthPattern::Gradient);
        assert_eq!(param_count(&p.descriptor(&clip)) as usize, p.net.param_count());
        assert!(p.run(&clip).unwrap().is_finite());
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(reference_pipeline("nope", 0), Err(BenchError::UnknownPipeline(_))));
        for n in ["identity", "features", "fragments_net"] {
            assert_eq!(reference_pipeline(n, 0).unwrap().name(), n);
        }
    }
}
