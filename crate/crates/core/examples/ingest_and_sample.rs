//! Round-trips a synthetic clip through Y4M, then applies every temporal
//! mode and the three spatial transforms.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example ingest_and_sample
//! ```

use ugc_vqa::clip_io::{ClipSpec, SynthPattern, parse_y4m, synth_clip, write_y4m};
use ugc_vqa::sampling::{SpatialTransform, TemporalMode, frankenstone_subset, sample_view, temporal_sample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ClipSpec::new("demo", 90, 480, 270);
    let clip = synth_clip(&spec, SynthPattern::Noise(7));

    let mut bytes = Vec::new();
    write_y4m(&clip, &mut bytes)?;
    let back = parse_y4m(&bytes)?;
    println!(
        "y4m: {} bytes, {}x{} @ {}, {} frames",
        bytes.len(),
        back.width(),
        back.height(),
        back.fps(),
        back.frame_count()
    );

    for mode in [
        TemporalMode::OnePer30,
        TemporalMode::TwoPer30,
        TemporalMode::OneFps,
        TemporalMode::FiveFps,
        TemporalMode::FRANKENSTONE,
    ] {
        let plan = temporal_sample(&back, mode);
        println!("{mode:<22} {:?}", plan.indices);
    }
    println!("end-weighted 5 of 20 seconds: {:?}", frankenstone_subset(20, 5));

    let plan = temporal_sample(&back, TemporalMode::OnePer30);
    for t in [
        SpatialTransform::Resize { width: 224, height: 224 },
        SpatialTransform::PadSquareThenResize { side: 448 },
        SpatialTransform::fragment(42),
    ] {
        let view = sample_view(&back, &plan, t, false)?;
        let f = &view.frames[0].luma;
        println!("{:<40} -> {} frames of {}x{}", format!("{t:?}"), view.frames.len(), f.width(), f.height());
    }
    Ok(())
}
