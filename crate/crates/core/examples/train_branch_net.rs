//! Siamese pretraining on two datasets with different MOS scales, then
//! fine-tuning on one of them; reports held-out correlations on both.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example train_branch_net
//! ```

use ugc_vqa::corpus::{CorpusConfig, generate_corpus};
use ugc_vqa::eval::{EvalPair, MetricReport};
use ugc_vqa::features::FeatureVector;
use ugc_vqa::regressors::{BranchFitOptions, Checkpoint, NetDims, TrainConfig, fit_branch_model};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusConfig::default())?;
    let (first, second) = corpus.items.split_at(200);
    // Same content ordering, two scoring scales.
    let part = |items: &[ugc_vqa::corpus::CorpusItem], scale: fn(f64) -> f64| {
        let (train, test) = items.split_at(150);
        let f = |s: &[ugc_vqa::corpus::CorpusItem]| -> (Vec<FeatureVector>, Vec<f64>) {
            (s.iter().map(|i| i.features).collect(), s.iter().map(|i| scale(i.mos)).collect())
        };
        (f(train), f(test))
    };
    let ((a_x, a_y), (a_tx, a_ty)) = part(first, |m| m);
    let ((b_x, b_y), (b_tx, b_ty)) = part(second, |m| (m - 1.0) * 25.0);

    let train = TrainConfig {
        learning_rate: 0.05,
        epochs: 300,
        weight_decay: 0.001,
        ..Default::default()
    };
    let opts = BranchFitOptions {
        dims: NetDims::default(),
        init_seed: 1,
        pretrain: Some(TrainConfig { seed: 2, ..train }),
        // Full-batch fine-tuning keeps the PLCC term a whole-set statistic.
        finetune: TrainConfig {
            seed: 3,
            epochs: 150,
            batch_size: a_x.len(),
            ..train
        },
    };
    let (model, reports) = fit_branch_model(
        &[("scale_1_5", &a_x, &a_y), ("scale_0_100", &b_x, &b_y)],
        (&a_x, &a_y),
        &opts,
    )?;
    println!("pairs drawn per dataset: {:?}", reports[0].pairs_per_dataset);
    println!(
        "finetune loss: {:.4} -> {:.4}",
        reports[1].epoch_loss[0],
        reports[1].epoch_loss.last().unwrap()
    );

    let ck = Checkpoint::BranchNet(model);
    for (name, x, y) in [("1-5 held-out", &a_tx, &a_ty), ("0-100 held-out", &b_tx, &b_ty)] {
        let p = ck.predict_many(x)?;
        let r = MetricReport::compute(EvalPair::new(&p, y)?)?;
        println!("{name:<15} SROCC {:.3}  KROCC {:.3}  PLCC {:.3}", r.srocc, r.krocc, r.plcc);
    }
    Ok(())
}
