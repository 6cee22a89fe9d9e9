//! Cost model and timing protocol: MACs and parameters for declared stages,
//! 3 warmups plus 10 timed runs per pipeline on 30-FHD, and the 1 s gate.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example efficiency_bench
//! ```

use std::time::Duration;

use ugc_vqa::bench::{
    BenchConfig, ConstraintGate, PIPELINE_NAMES, PipelineDescriptor, Stage, StageOp, TimedStage, busy_wait,
    check_constraint, count_macs, count_params, reference_pipeline, time_pipeline, time_stages, write_summary_csv,
};
use ugc_vqa::clip_io::{ClipSpec, SynthPattern, synth_clip};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let conv = PipelineDescriptor::new(
        1,
        vec![Stage::per_frame(StageOp::Conv2d {
            c_in: 3,
            c_out: 8,
            k_h: 3,
            k_w: 3,
            h_out: 224,
            w_out: 224,
        })],
    )?;
    println!("conv 3->8 3x3 @224: {} GMACs, {} M params", count_macs(&conv), count_params(&conv));

    let spec = ClipSpec::fhd_30();
    let clip = synth_clip(&spec, SynthPattern::Noise(0));
    let gate = ConstraintGate::canonical();
    let mut reports = Vec::new();
    for name in PIPELINE_NAMES {
        let p = reference_pipeline(name, 0)?;
        let mut r = time_pipeline(p.as_ref(), &spec, &clip, BenchConfig::default())?;
        let v = check_constraint(&r, &gate)?;
        r.pass = v.pass;
        println!("{name:<16} {:>9.2} ms  margin {:>8.1} ms", r.runtime_ms, v.margin_ms);
        reports.push(r);
    }
    write_summary_csv(&reports, std::io::stdout())?;

    // Per-stage timing with controlled delays; stages sum to the total.
    let stage = |name: &str, ms: u64| TimedStage {
        name: name.into(),
        run: Box::new(move |_| {
            busy_wait(Duration::from_millis(ms));
            Ok(())
        }),
    };
    let stages = [stage("semantic", 12), stage("technical", 6), stage("heads", 2)];
    let t = time_stages(&stages, &clip, BenchConfig { warmup: 1, runs: 5 })?;
    println!("stages {:?}: sum {:.1} ms, total {:.1} ms", t.stages, t.stage_sum_ms(), t.total_ms);
    Ok(())
}
