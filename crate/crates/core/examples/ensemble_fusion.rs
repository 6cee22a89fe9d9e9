//! Weighted fusion of two models' scores at a 7:8 ratio, raw and z-scored.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example ensemble_fusion
//! ```

use ugc_vqa::scoring::{FusionSpec, Normalization, fuse_scores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model_a = vec![3.0, 2.2, 4.1, 1.7];
    let model_b = vec![4.5, 2.0, 3.9, 2.4];
    let lists = [model_a, model_b];

    let raw = FusionSpec::new(vec![7.0, 8.0], Normalization::None)?;
    println!("raw 7:8     {:?}", fuse_scores(&lists, &raw)?);

    let scaled = FusionSpec::new(vec![70.0, 80.0], Normalization::None)?;
    println!("raw 70:80   {:?}", fuse_scores(&lists, &scaled)?);

    let z = FusionSpec::new(vec![7.0, 8.0], Normalization::Zscore)?;
    println!("zscore 7:8  {:?}", fuse_scores(&lists, &z)?);

    let from_json: FusionSpec = serde_json::from_str(r#"{"weights":[7,8],"normalization":"none"}"#)?;
    assert_eq!(from_json, raw);
    Ok(())
}
