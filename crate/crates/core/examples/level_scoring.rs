//! Five-level binning, close-set softmax and the expected score.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example level_scoring
//! ```

use ugc_vqa::scoring::{LEVEL_NAMES, ScoreRange, bin_score, expected_score, softmax_levels};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mos = ScoreRange::mos();
    for s in [1.0, 1.8, 1.81, 2.9, 4.2, 5.0] {
        let level = bin_score(s, mos)?;
        println!("MOS {s:<5} -> level {level} ({})", LEVEL_NAMES[level - 1]);
    }
    let wide = ScoreRange::new(0.0, 100.0)?;
    println!("0-100 scale: 50 -> level {}", bin_score(50.0, wide)?);

    // Logits a language model might assign to the five level words.
    for logits in [[0.0; 5], [-2.0, -1.0, 0.5, 2.0, 1.0], [4.0, 1.0, -1.0, -3.0, -5.0]] {
        let dist = softmax_levels(logits);
        let p: Vec<String> = dist.probabilities().iter().map(|v| format!("{v:.3}")).collect();
        println!("{logits:?} -> [{}] -> score {:.3}", p.join(", "), expected_score(&dist));
    }
    Ok(())
}
