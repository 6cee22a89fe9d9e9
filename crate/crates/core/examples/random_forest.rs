//! Fits the 300-tree forest on the synthetic corpus and compares it with the
//! mean predictor on held-out clips.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example random_forest
//! ```

use ugc_vqa::corpus::{CorpusConfig, generate_corpus};
use ugc_vqa::eval::{EvalPair, rmse, srocc};
use ugc_vqa::regressors::{ForestConfig, fit_forest, predict_forest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusConfig::default())?;
    let x = corpus.matrix();
    let y = corpus.mos();
    let (x_train, x_test) = x.split_at(300);
    let (y_train, y_test) = y.split_at(300);

    let forest = fit_forest(x_train, y_train, &ForestConfig::default())?;
    let nodes: usize = forest.trees.iter().map(|t| t.nodes.len()).sum();
    let depth = forest.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
    println!("{} trees, {nodes} nodes, max depth {depth}", forest.n_trees);

    let pred: Vec<f64> = x_test
        .iter()
        .map(|r| predict_forest(&forest, r))
        .collect::<Result<_, _>>()?;
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let baseline = vec![mean; y_test.len()];
    println!("forest RMSE {:.4}", rmse(EvalPair::new(&pred, y_test)?));
    println!("mean   RMSE {:.4}", rmse(EvalPair::new(&baseline, y_test)?));
    println!("forest SROCC {:.4}", srocc(EvalPair::new(&pred, y_test)?)?);
    Ok(())
}
