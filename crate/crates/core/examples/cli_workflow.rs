//! Drives the command-line frontend end to end in a temporary directory:
//! write clips, extract, train a forest, predict, evaluate, fuse.
//!
//! ```bash
//! cargo run --release -p ugc-vqa --example cli_workflow
//! ```

use std::fs::File;

use ugc_vqa::cli;
use ugc_vqa::clip_io::write_y4m;
use ugc_vqa::corpus::{CorpusConfig, corpus_clip, generate_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = CorpusConfig {
        clips: 60,
        ..Default::default()
    };
    let corpus = generate_corpus(&cfg)?;
    let clips = dir.path().join("clips");
    std::fs::create_dir(&clips)?;
    for (i, item) in corpus.items.iter().enumerate() {
        let (_, clip) = corpus_clip(&cfg, i)?;
        write_y4m(&clip, File::create(clips.join(format!("{}.y4m", item.id)))?)?;
    }
    corpus.write_mos_csv(File::create(dir.path().join("mos.csv"))?)?;

    let p = |name: &str| dir.path().join(name).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["extract".into(), "--input".into(), clips.display().to_string(), "--temporal".into(), "all".into(), "--out".into(), p("features.csv")],
        vec!["train".into(), "--features".into(), p("features.csv"), "--mos".into(), p("mos.csv"), "--mode".into(), "forest".into(), "--trees".into(), "100".into(), "--out".into(), p("forest.json")],
        vec!["predict".into(), "--model".into(), p("forest.json"), "--features".into(), p("features.csv"), "--out".into(), p("pred.csv")],
        vec!["eval".into(), "--pred".into(), p("pred.csv"), "--mos".into(), p("mos.csv")],
        vec!["fuse".into(), "--pred".into(), p("pred.csv"), p("pred.csv"), "--weights".into(), "7".into(), "8".into(), "--out".into(), p("fused.csv")],
    ];
    for args in steps {
        println!("$ ugc-vqa {}", args.join(" "));
        let code = cli::run(std::iter::once("ugc-vqa".to_string()).chain(args));
        if code != cli::EXIT_OK {
            return Err(format!("exit code {code}").into());
        }
    }
    Ok(())
}
