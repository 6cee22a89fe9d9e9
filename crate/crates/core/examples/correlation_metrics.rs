//! SROCC, KROCC, PLCC and RMSE for a small prediction set, including ties.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example correlation_metrics
//! ```

use ugc_vqa::eval::{EvalPair, MetricReport, average_ranks, evaluate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pred = [3.1, 2.4, 4.0, 4.0, 1.2, 3.3];
    let mos = [3.4, 2.0, 4.4, 3.9, 1.5, 3.0];
    println!("prediction ranks {:?}", average_ranks(&pred));
    let report = MetricReport::compute(EvalPair::new(&pred, &mos)?)?;
    println!("{}", report.to_json());

    // The same through the CSV interface the `eval` command uses.
    let pred_csv = "clip_id,score\na,1.0\nb,2.0\nc,3.0\n";
    let mos_csv = "clip_id,mos\nc,3.0\na,1.0\nb,2.0\nextra,5.0\n";
    println!("{}", evaluate(pred_csv.as_bytes(), mos_csv.as_bytes())?.to_json());

    // Undefined correlations are errors, not NaN.
    let flat = [2.0, 2.0, 2.0];
    println!("{:?}", MetricReport::compute(EvalPair::new(&flat, &mos[..3])?));
    Ok(())
}
