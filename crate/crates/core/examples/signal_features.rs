//! Extracts the nine clip-level signal features from a few synthetic clips
//! and prints them as the CSV the `extract` command writes.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example signal_features
//! ```

use ugc_vqa::clip_io::{ClipSpec, SynthPattern, synth_clip};
use ugc_vqa::corpus::{CorpusConfig, corpus_clip};
use ugc_vqa::features::{FeatureTable, extract_clip_features};
use ugc_vqa::sampling::{TemporalMode, temporal_sample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ClipSpec::new("small", 30, 160, 90);
    let mut table = FeatureTable::default();
    for (id, pattern) in [
        ("flat", SynthPattern::Constant(0.5)),
        ("ramp", SynthPattern::Gradient),
        ("noise", SynthPattern::Noise(1)),
    ] {
        let clip = synth_clip(&spec, pattern);
        let plan = temporal_sample(&clip, TemporalMode::FiveFps);
        table.rows.push((id.to_string(), extract_clip_features(&clip, &plan)?));
    }

    // Textured, moving, colored content from the synthetic corpus.
    let cfg = CorpusConfig::default();
    for i in 0..3 {
        let (params, clip) = corpus_clip(&cfg, i)?;
        let plan = temporal_sample(&clip, TemporalMode::All);
        eprintln!("corpus_{i}: {params:?}");
        table.rows.push((format!("corpus_{i}"), extract_clip_features(&clip, &plan)?));
    }
    table.write_csv(std::io::stdout())?;
    Ok(())
}
