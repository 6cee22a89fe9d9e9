//! Batch command-line frontend.
//!
//! Exit codes: 0 on success, 1 on fatal input or usage errors, 2 when some
//! inputs failed but output was still produced.

mod args;

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

pub use args::{
    BenchArgs, Cli, Command, EvalArgs, ExtractArgs, Format, FuseArgs, GlobalOpts, NormArg, PredictArgs, TrainArgs,
    TrainMode, merge_config,
};

use crate::bench::{BenchConfig, ConstraintGate, check_constraint, reference_pipeline, time_pipeline};
use crate::clip_io::{ClipSpec, Fps, SynthPattern, VideoClip, load_frame_dir, read_y4m_file, synth_clip};
use crate::eval::{MetricReport, ScoreTable, evaluate};
use crate::features::{FeatureTable, FeatureVector, extract_clip_features, extract_view_features};
use crate::regressors::{
    BranchFitOptions, Checkpoint, ForestConfig, NetDims, TrainConfig, TrainReport, fit_branch_model, fit_forest,
};
use crate::sampling::{sample_view, temporal_sample};
use crate::scoring::{FusionSpec, fuse_scores};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// A fatal error carrying its message.
#[derive(Debug)]
pub struct Fatal(pub String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type CmdResult = Result<i32, Fatal>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.global.threads {
        // Fails only if a pool already exists, as in tests running in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FATAL
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Extract(a) => cmd_extract(g, a),
        Command::Train(a) => cmd_train(g, a),
        Command::Predict(a) => cmd_predict(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::Fuse(a) => cmd_fuse(g, a),
        Command::Bench(a) => cmd_bench(g, a),
    }
}

/// Writes to `--output` or stdout.
fn with_output(g: &GlobalOpts, f: impl FnOnce(&mut dyn Write) -> Result<(), Fatal>) -> Result<(), Fatal> {
    match &g.output {
        Some(p) => {
            let file = File::create(p).map_err(|e| Fatal(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn open(p: &Path) -> Result<BufReader<File>, Fatal> {
    File::open(p)
        .map(BufReader::new)
        .map_err(|e| Fatal(format!("{}: {e}", p.display())))
}

fn is_y4m(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

fn is_pnm(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| ["pgm", "ppm"].iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn clip_id(p: &Path) -> String {
    p.file_stem()
        .or_else(|| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Expands inputs into `(id, path, is_frame_dir)` clip sources.
fn clip_sources(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf, bool)>, Fatal> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_file() {
            out.push((clip_id(input), input.clone(), false));
            continue;
        }
        if !input.is_dir() {
            return Err(Fatal(format!("{}: no such file or directory", input.display())));
        }
        let mut entries: Vec<PathBuf> = std::fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        let nested: Vec<&PathBuf> = entries.iter().filter(|p| is_y4m(p) || p.is_dir()).collect();
        if nested.is_empty() && entries.iter().any(|p| is_pnm(p)) {
            out.push((clip_id(input), input.clone(), true));
        } else {
            for p in nested {
                out.push((clip_id(p), p.clone(), p.is_dir()));
            }
        }
    }
    Ok(out)
}

fn load_clip(path: &Path, frame_dir: bool, fps: Fps) -> Result<VideoClip, Fatal> {
    if frame_dir {
        Ok(load_frame_dir(path, fps)?)
    } else {
        Ok(read_y4m_file(path)?)
    }
}

pub fn cmd_extract(g: &GlobalOpts, a: &ExtractArgs) -> CmdResult {
    let fps = Fps::integer(a.fps.max(1));
    let spatial = a.spatial.map(|t| t.with_seed(g.seed));
    if let Some(t) = spatial {
        t.validate()?;
    }
    let sources = clip_sources(&a.input)?;
    let mut table = FeatureTable::default();
    let mut failures = 0;
    for (id, path, frame_dir) in &sources {
        let result = load_clip(path, *frame_dir, fps).and_then(|clip| {
            let plan = temporal_sample(&clip, a.temporal);
            match spatial {
                None => Ok(extract_clip_features(&clip, &plan)?),
                Some(t) => Ok(extract_view_features(&sample_view(&clip, &plan, t, true)?)?),
            }
        });
        match result {
            Ok(fv) => table.rows.push((id.clone(), fv)),
            Err(Fatal(msg)) => {
                failures += 1;
                eprintln!("{}: {msg}", path.display());
            }
        }
    }
    if table.is_empty() {
        return Err(Fatal("no readable clips".into()));
    }
    with_output(g, |w| {
        match g.format.unwrap_or(Format::Csv) {
            Format::Csv => table.write_csv(w)?,
            Format::Json => table.write_json(w)?,
        }
        Ok(())
    })?;
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

/// Feature rows joined to MOS by clip id, in feature-file order.
fn load_dataset(features: &Path, mos: &Path) -> Result<(Vec<FeatureVector>, Vec<f64>), Fatal> {
    let table = FeatureTable::read_csv(open(features)?).map_err(|e| Fatal(format!("{}: {e}", features.display())))?;
    let labels = ScoreTable::read_csv(open(mos)?, "mos").map_err(|e| Fatal(format!("{}: {e}", mos.display())))?;
    let lookup = labels.to_map();
    let mut rows = Vec::with_capacity(table.len());
    let mut target = Vec::with_capacity(table.len());
    for (id, fv) in &table.rows {
        let m = lookup
            .get(id.as_str())
            .ok_or_else(|| Fatal(format!("clip '{id}' from {} has no MOS in {}", features.display(), mos.display())))?;
        rows.push(*fv);
        target.push(*m);
    }
    if rows.len() < 2 {
        return Err(Fatal(format!("{}: need at least 2 labelled rows", features.display())));
    }
    Ok((rows, target))
}

#[derive(Serialize)]
struct TrainLog<'a> {
    mode: &'a str,
    datasets: Vec<String>,
    phases: Vec<(&'static str, TrainReport)>,
}

pub fn cmd_train(g: &GlobalOpts, a: &TrainArgs) -> CmdResult {
    if a.features.len() != a.mos.len() {
        return Err(Fatal(format!(
            "{} feature files but {} MOS files",
            a.features.len(),
            a.mos.len()
        )));
    }
    let names: Vec<String> = a.features.iter().map(|p| clip_id(p)).collect();
    let data = a
        .features
        .iter()
        .zip(&a.mos)
        .map(|(f, m)| load_dataset(f, m))
        .collect::<Result<Vec<_>, _>>()?;

    let (checkpoint, log) = match a.mode {
        TrainMode::Forest => {
            let x: Vec<Vec<f64>> = data.iter().flat_map(|(r, _)| r.iter().map(|f| f.values().to_vec())).collect();
            let y: Vec<f64> = data.iter().flat_map(|(_, m)| m.iter().copied()).collect();
            let cfg = ForestConfig {
                n_trees: a.trees,
                max_depth: a.max_depth,
                min_leaf: a.min_leaf,
                seed: g.seed,
                ..Default::default()
            };
            let forest = fit_forest(&x, &y, &cfg)?;
            let log = TrainLog {
                mode: "forest",
                datasets: names,
                phases: Vec::new(),
            };
            (Checkpoint::Forest(forest), log)
        }
        TrainMode::SiameseFinetune => {
            let base = TrainConfig {
                learning_rate: a.lr,
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: g.seed,
                rank_margin: a.margin,
                weight_decay: a.weight_decay,
                gate_dropout: a.dropout,
                ..Default::default()
            };
            base.validate()?;
            let (target_rows, target_mos) = data.last().expect("at least one dataset");
            let opts = BranchFitOptions {
                dims: NetDims::new(a.hidden, a.hidden, a.hidden),
                init_seed: g.seed,
                pretrain: Some(TrainConfig {
                    epochs: a.pretrain_epochs.unwrap_or(a.epochs),
                    ..base
                }),
                finetune: TrainConfig {
                    seed: g.seed.wrapping_add(1),
                    epochs: a.finetune_epochs.unwrap_or(a.epochs),
                    batch_size: a.finetune_batch_size.unwrap_or(target_rows.len()).max(2),
                    ..base
                },
            };
            let sets: Vec<(&str, &[FeatureVector], &[f64])> = names
                .iter()
                .zip(&data)
                .map(|(n, (r, m))| (n.as_str(), r.as_slice(), m.as_slice()))
                .collect();
            let (model, reports) = fit_branch_model(&sets, (target_rows, target_mos), &opts)?;
            let log = TrainLog {
                mode: "siamese+finetune",
                datasets: names,
                phases: ["siamese", "finetune"].into_iter().zip(reports).collect(),
            };
            (Checkpoint::BranchNet(model), log)
        }
    };

    with_output(g, |w| Ok(checkpoint.write_json(w)?))?;
    let log_json = serde_json::to_string_pretty(&log)?;
    let log_path = a
        .log
        .clone()
        .or_else(|| g.output.as_ref().map(|p| PathBuf::from(format!("{}.log.json", p.display()))));
    match log_path {
        Some(p) => std::fs::write(&p, log_json).map_err(|e| Fatal(format!("{}: {e}", p.display())))?,
        None => eprintln!("{log_json}"),
    }
    Ok(EXIT_OK)
}

fn write_scores(g: &GlobalOpts, table: &ScoreTable) -> Result<(), Fatal> {
    with_output(g, |w| {
        match g.format.unwrap_or(Format::Csv) {
            Format::Csv => table.write_csv(w)?,
            Format::Json => {
                let rows: Vec<HashMap<&str, serde_json::Value>> = table
                    .rows
                    .iter()
                    .map(|(id, v)| HashMap::from([("clip_id", id.as_str().into()), (table.column.as_str(), (*v).into())]))
                    .collect();
                serde_json::to_writer(&mut *w, &rows)?;
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

pub fn cmd_predict(g: &GlobalOpts, a: &PredictArgs) -> CmdResult {
    let model = Checkpoint::read_json(open(&a.model)?).map_err(|e| Fatal(format!("{}: {e}", a.model.display())))?;
    let table = FeatureTable::read_csv(open(&a.features)?)?;
    let rows: Vec<FeatureVector> = table.rows.iter().map(|(_, f)| *f).collect();
    let scores = model.predict_many(&rows)?;
    let out = ScoreTable::new("score", table.rows.iter().map(|(id, _)| id.clone()).zip(scores).collect());
    write_scores(g, &out)?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(g: &GlobalOpts, a: &EvalArgs) -> CmdResult {
    let report: MetricReport = evaluate(open(&a.pred)?, open(&a.mos)?)?;
    with_output(g, |w| {
        match g.format.unwrap_or(Format::Json) {
            Format::Json => writeln!(w, "{}", report.to_json())?,
            Format::Csv => write!(w, "{}", report.to_csv())?,
        }
        Ok(())
    })?;
    Ok(EXIT_OK)
}

pub fn cmd_fuse(g: &GlobalOpts, a: &FuseArgs) -> CmdResult {
    let spec = FusionSpec::new(a.weights.clone(), a.normalization.into())?;
    let tables = a
        .pred
        .iter()
        .map(|p| ScoreTable::read_csv(open(p)?, "score").map_err(|e| Fatal(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let ids: Vec<String> = tables[0].rows.iter().map(|(id, _)| id.clone()).collect();
    let mut lists = Vec::with_capacity(tables.len());
    for (t, path) in tables.iter().zip(&a.pred) {
        if t.rows.len() != ids.len() {
            return Err(Fatal(format!("{} has {} rows, expected {}", path.display(), t.rows.len(), ids.len())));
        }
        let m = t.to_map();
        lists.push(
            ids.iter()
                .map(|id| {
                    m.get(id.as_str())
                        .copied()
                        .ok_or_else(|| Fatal(format!("{} has no score for '{id}'", path.display())))
                })
                .collect::<Result<Vec<f64>, _>>()?,
        );
    }
    let fused = fuse_scores(&lists, &spec)?;
    write_scores(g, &ScoreTable::new("score", ids.into_iter().zip(fused).collect()))?;
    Ok(EXIT_OK)
}

pub fn cmd_bench(g: &GlobalOpts, a: &BenchArgs) -> CmdResult {
    let spec = ClipSpec::by_label(&a.spec).ok_or_else(|| Fatal(format!("unknown clip spec '{}'", a.spec)))?;
    let gate = ConstraintGate::new(spec.label.clone(), a.budget_ms)?;
    let cfg = BenchConfig {
        warmup: a.warmup,
        runs: a.runs,
    };
    if cfg.runs == 0 {
        return Err(Fatal("--runs must be at least 1".into()));
    }
    let pipeline = reference_pipeline(&a.pipeline, g.seed)?;
    // Ingestion happens before timing.
    let clip = synth_clip(&spec, SynthPattern::Noise(g.seed));
    let mut report = time_pipeline(pipeline.as_ref(), &spec, &clip, cfg)?;
    let verdict = check_constraint(&report, &gate)?;
    report.pass = verdict.pass;
    with_output(g, |w| {
        match g.format.unwrap_or(Format::Json) {
            Format::Json => writeln!(w, "{}", report.to_json())?,
            Format::Csv => crate::bench::write_summary_csv(std::slice::from_ref(&report), w)?,
        }
        Ok(())
    })?;
    eprintln!(
        "{} on {}: {:.1} ms mean of {} runs, {} ({:+.1} ms margin)",
        report.pipeline,
        report.spec,
        report.runtime_ms,
        report.runs.len(),
        if verdict.pass { "pass" } else { "fail" },
        verdict.margin_ms
    );
    Ok(EXIT_OK)
}
