//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{AssertUnwindSafe, catch_unwind};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ugc_vqa::bench::{
    BenchConfig, Pipeline, PipelineDescriptor, RunError, Stage, StageOp, busy_wait, mac_count, time_pipeline,
};
use ugc_vqa::clip_io::{ClipSpec, Plane, SynthPattern, VideoClip, synth_clip};
use ugc_vqa::corpus::{CorpusConfig, CorpusItem, generate_corpus};
use ugc_vqa::eval::{EvalPair, MetricError, krocc, plcc, rmse, srocc};
use ugc_vqa::features::FeatureVector;
use ugc_vqa::regressors::{
    BranchFitOptions, BranchInputs, BranchNet, Checkpoint, ForestConfig, LossWeights, Matrix, NetDims, ScgbParams,
    TrainConfig, TrainSet, evaluate_total_loss, fit_branch_model, fit_forest, predict_forest, scgb_fuse,
    total_loss_and_grad,
};
use ugc_vqa::sampling::{SpatialTransform, TemporalMode, fragment_sample, frankenstone_subset, sample_view, temporal_sample};
use ugc_vqa::scoring::{
    FusionSpec, LevelDistribution, Normalization, ScoreRange, bin_score, expected_score, fuse_scores, softmax_levels,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

// ---------------------------------------------------------------------------
// 1. Metrics against exact rational oracles

fn rat(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

fn exact_mean(v: &[BigRational]) -> BigRational {
    v.iter().fold(BigRational::zero(), |a, b| a + b) / BigRational::from_integer(BigInt::from(v.len()))
}

/// Exact Pearson as sign and squared value; `None` when a variance is zero.
fn oracle_pearson(x: &[BigRational], y: &[BigRational]) -> Option<f64> {
    let (mx, my) = (exact_mean(x), exact_mean(y));
    let mut sxy = BigRational::zero();
    let mut sxx = BigRational::zero();
    let mut syy = BigRational::zero();
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - &mx, b - &my);
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return None;
    }
    let r2 = (&sxy * &sxy) / (sxx * syy);
    let r = r2.to_f64().expect("representable").sqrt();
    Some(if sxy.is_negative() { -r } else { r })
}

/// Average ranks by counting, O(n^2).
fn oracle_ranks(v: &[f64]) -> Vec<BigRational> {
    v.iter()
        .map(|a| {
            let below = v.iter().filter(|b| *b < a).count() as i64;
            let equal = v.iter().filter(|b| *b == a).count() as i64;
            BigRational::new(BigInt::from(2 * below + equal + 1), BigInt::from(2))
        })
        .collect()
}

fn oracle_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * (x[i] != x[j]) as i64;
            let dy = (y[i] - y[j]).signum() as i64 * (y[i] != y[j]) as i64;
            s += dx * dy;
            tx += (dx == 0) as i64;
            ty += (dy == 0) as i64;
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let d = (n0 - tx) * (n0 - ty);
    (d != 0).then(|| s as f64 / (d as f64).sqrt())
}

fn oracle_rmse(x: &[f64], y: &[f64]) -> f64 {
    let sq: Vec<BigRational> = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let d = rat(*a) - rat(*b);
            &d * &d
        })
        .collect();
    exact_mean(&sq).to_f64().expect("representable").sqrt()
}

/// Compares one metric value with its oracle; both must agree on definedness.
fn agree(name: &str, got: Result<f64, MetricError>, want: Option<f64>, worst: &mut f64) -> Result<(), String> {
    match (got, want) {
        (Ok(g), Some(w)) => {
            let d = (g - w).abs();
            *worst = worst.max(d);
            ensure!(d <= 1e-12, "{name}: {g} vs oracle {w}");
        }
        (Err(MetricError::UndefinedCorrelation(_)), None) => {}
        (g, w) => return Err(format!("{name}: {g:?} vs oracle {w:?}")),
    }
    Ok(())
}

fn check_metrics(x: &[f64], y: &[f64], worst: &mut f64) -> Result<(), String> {
    let pair = EvalPair::new(x, y).map_err(|e| e.to_string())?;
    let ctx = |e: String| format!("{e} on x={x:?} y={y:?}");
    let rx: Vec<BigRational> = x.iter().map(|v| rat(*v)).collect();
    let ry: Vec<BigRational> = y.iter().map(|v| rat(*v)).collect();
    agree("plcc", plcc(pair), oracle_pearson(&rx, &ry), worst).map_err(ctx)?;
    agree("srocc", srocc(pair), oracle_pearson(&oracle_ranks(x), &oracle_ranks(y)), worst).map_err(ctx)?;
    agree("krocc", krocc(pair), oracle_tau_b(x, y), worst).map_err(ctx)?;
    agree("rmse", Ok(rmse(pair)), Some(oracle_rmse(x, y)), worst).map_err(ctx)?;
    Ok(())
}

/// All vectors of length `n` over {1,2,3}.
fn ternary(n: usize) -> Vec<Vec<f64>> {
    (0..3usize.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let d = k % 3;
                    k /= 3;
                    (d + 1) as f64
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 2..=8 {
        let all = ternary(n);
        if n <= 5 {
            // Every (x, y) pair.
            for x in &all {
                for y in &all {
                    check_metrics(x, y, &mut worst)?;
                    cases += 1;
                }
            }
        } else {
            // Every x against its reverse, a rotation and a random partner.
            for x in &all {
                let rev: Vec<f64> = x.iter().rev().copied().collect();
                let mut rot = x.clone();
                rot.rotate_left(1);
                let other = &all[rng.random_range(0..all.len())];
                for y in [&rev, &rot, other] {
                    check_metrics(x, y, &mut worst)?;
                    cases += 1;
                }
            }
        }
    }
    let exhaustive = cases;
    for k in 0..10_000 {
        let n = rng.random_range(2..=50);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let v = (0..n).map(|_| rng.random_range(-10.0..10.0));
            // Every other vector is quantized to force ties.
            if k % 2 == 0 {
                v.map(|a: f64| (a * 2.0).round() / 2.0).collect()
            } else {
                v.collect()
            }
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        check_metrics(&x, &y, &mut worst)?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "{exhaustive} ternary + 10000 random pairs, max |diff| {worst:.1e}, {secs:.1} s"
    ))
}

// ---------------------------------------------------------------------------
// 2. Frame subset

fn criterion_2() -> Outcome {
    let got = frankenstone_subset(20, 5).map_err(|e| e.to_string())?;
    ensure!(got == vec![0, 6, 11, 15, 18], "subset(20, 5) = {got:?}");
    for m in 5..=600 {
        let s = frankenstone_subset(m, 5).map_err(|e| e.to_string())?;
        ensure!(s.len() == 5 && s[4] < m, "m={m}: {s:?}");
        let gaps: Vec<usize> = s.windows(2).map(|w| w[1] - w[0]).collect();
        ensure!(gaps.iter().all(|&g| g >= 1), "m={m}: not strictly increasing {s:?}");
        ensure!(gaps.windows(2).all(|g| g[1] <= g[0]), "m={m}: gaps increase {s:?}");
    }
    Ok("subset(20, 5) = [0, 6, 11, 15, 18]; gaps non-increasing for m in 5..=600".into())
}

// ---------------------------------------------------------------------------
// 3. Level scoring

fn criterion_3() -> Outcome {
    for (lo, hi) in [(1.0, 5.0), (0.0, 100.0)] {
        let range = ScoreRange::new(lo, hi).map_err(|e| e.to_string())?;
        for i in 1..=5usize {
            let upper = lo + i as f64 / 5.0 * (hi - lo);
            let level = bin_score(upper, range).map_err(|e| e.to_string())?;
            ensure!(level == i, "({lo},{hi}): upper endpoint {upper} -> {level}, want {i}");
        }
        ensure!(bin_score(lo, range) == Ok(1), "({lo},{hi}): minimum not level 1");
    }
    ensure!(expected_score(&LevelDistribution::uniform()) == 3.0, "uniform expectation");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let scale = [0.1, 1.0, 10.0, 100.0][rng.random_range(0..4)];
        let logits: [f64; 5] = std::array::from_fn(|_| rng.random_range(-scale..scale));
        let sum: f64 = softmax_levels(logits).probabilities().iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    ensure!(worst <= 1e-12, "softmax sum off by {worst:e}");

    for _ in 0..1_000 {
        let logits: [f64; 5] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let p = *softmax_levels(logits).probabilities();
        let i = rng.random_range(0..4);
        let j = rng.random_range(i + 1..5);
        let delta = p[i] * rng.random_range(0.01..1.0);
        let mut q = p;
        q[i] -= delta;
        q[j] += delta;
        let (a, b) = (
            expected_score(&LevelDistribution::new(p).map_err(|e| e.to_string())?),
            expected_score(&LevelDistribution::new(q).map_err(|e| e.to_string())?),
        );
        ensure!(b > a, "moving {delta} from level {} to {}: {a} -> {b}", i + 1, j + 1);
        ensure!(((b - a) - delta * (j - i) as f64).abs() < 1e-12, "increase {} != {}", b - a, delta * (j - i) as f64);
    }
    Ok(format!(
        "boundaries exact on (1,5) and (0,100), E[uniform] = 3, softmax max |sum-1| {worst:.1e}, 1000 transfers monotone"
    ))
}

// ---------------------------------------------------------------------------
// 4. Fragment sampling

/// Which of 7 lattice regions a coordinate falls in, the last taking the remainder.
fn lattice(c: usize, n: usize) -> usize {
    (c / (n / 7)).min(6)
}

fn region_constant(w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |x, y| (7 * lattice(y, h) + lattice(x, w)) as f32 / 49.0)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut thread_checks = 0;
    for case in 0..1_000 {
        let w = if case % 10 == 0 { 224 } else { rng.random_range(224..=1000) };
        let h = if case % 15 == 0 { 224 } else { rng.random_range(224..=1000) };
        let seed: u64 = rng.random();
        let out = fragment_sample(&region_constant(w, h), 7, 32, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(|e| e.to_string())?;
        ensure!((out.width(), out.height()) == (224, 224), "{w}x{h}: output {}x{}", out.width(), out.height());
        for y in 0..224 {
            for x in 0..224 {
                let want = (7 * (y / 32) + x / 32) as f32 / 49.0;
                ensure!(out.at(x, y) == want, "{w}x{h} seed {seed}: ({x},{y}) = {} want {want}", out.at(x, y));
            }
        }

        if case % 40 == 0 {
            let clip = synth_clip(&ClipSpec::new("f", 6, w, h), SynthPattern::Noise(seed));
            let plan = temporal_sample(&clip, TemporalMode::All);
            let t = SpatialTransform::fragment(seed);
            let views: Vec<_> = [1, 2, 4, 8]
                .into_iter()
                .map(|n| in_pool(n, || sample_view(&clip, &plan, t, true)))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            for v in &views[1..] {
                let same = v.frames.iter().zip(&views[0].frames).all(|(a, b)| {
                    let bits = |p: &Plane| p.data().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                    bits(&a.luma) == bits(&b.luma)
                        && a.rgb.as_ref().map(|c| (bits(&c.r), bits(&c.g), bits(&c.b)))
                            == b.rgb.as_ref().map(|c| (bits(&c.r), bits(&c.g), bits(&c.b)))
                });
                ensure!(same, "{w}x{h} seed {seed}: output depends on thread count");
            }
            thread_checks += 1;
        }
    }
    Ok(format!(
        "1000 region-constant sources mapped cell-for-cell into 224x224; {thread_checks} clips bit-identical on 1/2/4/8 threads"
    ))
}

// ---------------------------------------------------------------------------
// 5. Gradient check

fn random_dims(rng: &mut ChaCha8Rng) -> NetDims {
    loop {
        let d = NetDims {
            semantic_in: rng.random_range(1..=3),
            aesthetic_in: rng.random_range(1..=3),
            technical_in: rng.random_range(1..=3),
            hidden: rng.random_range(1..=2),
            gate: rng.random_range(1..=2),
            head_hidden: rng.random_range(1..=2),
        };
        if d.param_count() <= 50 {
            return d;
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = LossWeights::default();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut sizes = (usize::MAX, 0);
    for net_index in 0..100 {
        let dims = random_dims(&mut rng);
        let mut net = BranchNet::init(dims, rng.random());
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let n = net.param_count();
        sizes = (sizes.0.min(n), sizes.1.max(n));
        let batch = rng.random_range(3..=8);
        let v = |k: usize, rng: &mut ChaCha8Rng| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let inputs: Vec<BranchInputs> = (0..batch)
            .map(|_| BranchInputs {
                semantic: v(dims.semantic_in, &mut rng),
                aesthetic: v(dims.aesthetic_in, &mut rng),
                technical: v(dims.technical_in, &mut rng),
            })
            .collect();
        let mos: Vec<f64> = (0..batch).map(|_| rng.random_range(1.0..5.0)).collect();
        let set = TrainSet::new("check", inputs, mos).map_err(|e| e.to_string())?;
        let (_, grad) = total_loss_and_grad(&net, &set, &w).map_err(|e| e.to_string())?;
        for i in 0..n {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = evaluate_total_loss(&net, &set, &w).map_err(|e| e.to_string())?;
            net.params_mut()[i] = orig - h;
            let down = evaluate_total_loss(&net, &set, &w).map_err(|e| e.to_string())?;
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            // Components below 1e-3 are compared on that floor.
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-3);
            worst = worst.max(rel);
            ensure!(rel < 1e-4, "net {net_index} ({n} params) param {i}: analytic {} vs numeric {fd}", grad[i]);
            checked += 1;
        }
    }
    Ok(format!(
        "100 nets of {}-{} params, {checked} partials, max relative error {worst:.1e}",
        sizes.0, sizes.1
    ))
}

// ---------------------------------------------------------------------------
// 6. Siamese learnability

fn columns(items: &[CorpusItem], scale: impl Fn(f64) -> f64) -> (Vec<FeatureVector>, Vec<f64>) {
    (items.iter().map(|i| i.features).collect(), items.iter().map(|i| scale(i.mos)).collect())
}

fn fit_options(target_len: usize) -> BranchFitOptions {
    let train = TrainConfig {
        learning_rate: 0.05,
        epochs: 300,
        weight_decay: 0.001,
        ..Default::default()
    };
    BranchFitOptions {
        dims: NetDims::default(),
        init_seed: 1,
        pretrain: Some(TrainConfig { seed: 2, ..train }),
        finetune: TrainConfig {
            seed: 3,
            epochs: 150,
            batch_size: target_len,
            ..train
        },
    }
}

fn held_out_srocc(
    pretrain: &[(&str, &[FeatureVector], &[f64])],
    target: (&[FeatureVector], &[f64]),
    test: (&[FeatureVector], &[f64]),
) -> Result<f64, String> {
    let (model, _) = fit_branch_model(pretrain, target, &fit_options(target.0.len())).map_err(|e| e.to_string())?;
    let pred = Checkpoint::BranchNet(model).predict_many(test.0).map_err(|e| e.to_string())?;
    srocc(EvalPair::new(&pred, test.1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = CorpusConfig::default();
    ensure!(cfg.clips == 400 && cfg.noise_frac == 0.05, "corpus config {cfg:?}");
    let corpus = generate_corpus(&cfg).map_err(|e| e.to_string())?;

    let (train, test) = corpus.split(300);
    let (x, y) = columns(train, |m| m);
    let (tx, ty) = columns(test, |m| m);
    let single = held_out_srocc(&[("all", &x, &y)], (&x, &y), (&tx, &ty))?;

    let (first, second) = corpus.items.split_at(200);
    let (a_x, a_y) = columns(&first[..150], |m| m);
    let (a_tx, a_ty) = columns(&first[150..], |m| m);
    let to_100 = |m: f64| (m - 1.0) * 25.0;
    let (b_x, b_y) = columns(&second[..150], to_100);
    let (b_tx, b_ty) = columns(&second[150..], to_100);
    ensure!(b_y.iter().chain(&b_ty).all(|v| (0.0..=100.0).contains(v)), "scale B out of range");
    let both: [(&str, &[FeatureVector], &[f64]); 2] = [("scale_1_5", &a_x, &a_y), ("scale_0_100", &b_x, &b_y)];
    let on_a = held_out_srocc(&both, (&a_x, &a_y), (&a_tx, &a_ty))?;
    let on_b = held_out_srocc(&both, (&b_x, &b_y), (&b_tx, &b_ty))?;

    let secs = start.elapsed().as_secs_f64();
    let detail = format!("held-out SROCC single {single:.3}, [1,5] {on_a:.3}, [0,100] {on_b:.3}, {secs:.1} s");
    ensure!(single >= 0.90 && on_a >= 0.90 && on_b >= 0.90, "{detail}");
    ensure!(secs < 600.0, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7. Forest

fn criterion_7() -> Outcome {
    let corpus = generate_corpus(&CorpusConfig::default()).map_err(|e| e.to_string())?;
    let (train, test) = corpus.split(300);
    let x: Vec<Vec<f64>> = train.iter().map(|i| i.features.values().to_vec()).collect();
    let y: Vec<f64> = train.iter().map(|i| i.mos).collect();
    let cfg = ForestConfig { seed: 7, ..Default::default() };
    ensure!(cfg.n_trees == 300, "default tree count {}", cfg.n_trees);

    let fit = |threads| in_pool(threads, || fit_forest(&x, &y, &cfg));
    let models: Vec<_> = [1, 1, 4].into_iter().map(fit).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure!(models[0].trees.len() == 300, "{} trees", models[0].trees.len());
    ensure!(models[0] == models[1], "refit with the same seed differs");
    ensure!(models[0] == models[2], "fit differs between 1 and 4 threads");

    let pred: Vec<f64> = test
        .iter()
        .map(|i| predict_forest(&models[0], &i.features.values()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let pred4: Vec<f64> = in_pool(4, || {
        test.iter().map(|i| predict_forest(&models[2], &i.features.values())).collect::<Result<_, _>>()
    })
    .map_err(|e| e.to_string())?;
    ensure!(
        pred.iter().map(|v| v.to_bits()).eq(pred4.iter().map(|v| v.to_bits())),
        "predictions differ across thread counts"
    );
    let truth: Vec<f64> = test.iter().map(|i| i.mos).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let baseline = vec![mean; truth.len()];
    let forest_rmse = rmse(EvalPair::new(&pred, &truth).map_err(|e| e.to_string())?);
    let mean_rmse = rmse(EvalPair::new(&baseline, &truth).map_err(|e| e.to_string())?);
    let detail = format!("test RMSE {forest_rmse:.4} vs mean predictor {mean_rmse:.4}; bit-identical across runs and 1/4 threads");
    ensure!(forest_rmse < mean_rmse, "{detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 8. Efficiency protocol

/// Warmup calls take 20 ms, timed calls 2 ms.
struct Probe {
    calls: AtomicUsize,
}

impl Pipeline for Probe {
    fn name(&self) -> &str {
        "probe"
    }

    fn descriptor(&self, _clip: &VideoClip) -> PipelineDescriptor {
        PipelineDescriptor::default()
    }

    fn run(&self, _clip: &VideoClip) -> Result<f64, RunError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        busy_wait(Duration::from_millis(if n < 3 { 20 } else { 2 }));
        Ok(n as f64)
    }
}

/// MACs of a direct convolution, counted one multiply at a time.
fn conv_loop_count(c_in: usize, c_out: usize, k_h: usize, k_w: usize, h_out: usize, w_out: usize) -> u128 {
    let mut n = 0u128;
    for _co in 0..c_out {
        for _y in 0..h_out {
            for _x in 0..w_out {
                for _ci in 0..c_in {
                    for _ky in 0..k_h {
                        for _kx in 0..k_w {
                            n += 1;
                        }
                    }
                }
            }
        }
    }
    n
}

fn bench_json(pipeline: &str, dir: &std::path::Path) -> Result<serde_json::Value, String> {
    let out = dir.join(format!("{pipeline}.json"));
    let code = ugc_vqa::cli::run([
        "ugc-vqa",
        "bench",
        "--pipeline",
        pipeline,
        "--spec",
        "30-FHD",
        "--output",
        out.to_str().unwrap(),
    ]);
    ensure!(code == 0, "bench {pipeline} exited {code}");
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn criterion_8() -> Outcome {
    let spec = ClipSpec::new("tiny", 2, 8, 8);
    let clip = synth_clip(&spec, SynthPattern::Constant(0.5));
    let probe = Probe { calls: AtomicUsize::new(0) };
    let r = time_pipeline(&probe, &spec, &clip, BenchConfig::default()).map_err(|e| e.to_string())?;
    ensure!(probe.calls.load(Ordering::SeqCst) == 13, "{} calls", probe.calls.load(Ordering::SeqCst));
    ensure!(r.runs.len() == 10 && r.warmup_runs == 3, "{} runs, {} warmups", r.runs.len(), r.warmup_runs);
    ensure!(r.runs.iter().all(|&t| (2.0..15.0).contains(&t)), "warmup leaked into timed runs: {:?}", r.runs);
    ensure!(r.runtime_ms == r.runs.iter().sum::<f64>() / 10.0, "runtime is not the mean of runs");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = bench_json("features_forest", dir.path())?;
    let runs: Vec<f64> = report["runs"]
        .as_array()
        .ok_or("no runs array")?
        .iter()
        .filter_map(|v| v.as_f64())
        .collect();
    let runtime = report["runtime_ms"].as_f64().ok_or("no runtime_ms")?;
    ensure!(runs.len() == 10, "cmd_bench reported {} runs", runs.len());
    ensure!(report["warmup_runs"] == 3, "cmd_bench warmups {}", report["warmup_runs"]);
    ensure!(runtime == runs.iter().sum::<f64>() / 10.0, "cmd_bench runtime is not the mean");
    ensure!(report["spec"] == "30-FHD", "spec {}", report["spec"]);
    ensure!(report["pass"] == true, "features_forest on 30-FHD: {runtime:.1} ms over the 1000 ms gate");

    let conv = StageOp::Conv2d {
        c_in: 3,
        c_out: 8,
        k_h: 3,
        k_w: 3,
        h_out: 224,
        w_out: 224,
    };
    let one = |op: StageOp| PipelineDescriptor::new(1, vec![Stage::per_frame(op)]).map(|d| mac_count(&d));
    let conv_macs = one(conv).map_err(|e| e.to_string())?;
    let lin_macs = one(StageOp::linear(768, 768, 1)).map_err(|e| e.to_string())?;
    ensure!(conv_macs == 10_838_016, "conv MACs {conv_macs}");
    ensure!(conv_macs == conv_loop_count(3, 8, 3, 3, 224, 224), "conv MACs disagree with loop count");
    let small = one(StageOp::Conv2d {
        c_in: 3,
        c_out: 8,
        k_h: 3,
        k_w: 3,
        h_out: 4,
        w_out: 4,
    })
    .map_err(|e| e.to_string())?;
    ensure!(small == conv_loop_count(3, 8, 3, 3, 4, 4), "4x4 conv MACs {small}");
    ensure!(lin_macs == 589_824, "linear MACs {lin_macs}");
    Ok(format!(
        "13 calls = 3 warmup + 10 timed, mean reported; features_forest 30-FHD {runtime:.1} ms (pass); conv 10838016 and linear 589824 MACs"
    ))
}

// ---------------------------------------------------------------------------
// 9. Fusion block

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect())
}

/// Elementwise evaluation with explicit loops.
fn scgb_oracle(x: &[f64], y: &[f64], p: &ScgbParams) -> Vec<f64> {
    let at = |m: &Matrix, r: usize, c: usize| m.data[r * m.cols + c];
    let gate = p.input_proj.rows;
    let mut mixed = vec![0.0; gate];
    for k in 0..gate {
        let mut u = 0.0;
        for (j, xv) in x.iter().enumerate() {
            u += at(&p.input_proj, k, j) * xv;
        }
        let mut z = 0.0;
        for (l, yv) in y.iter().enumerate() {
            z += at(&p.gate_proj, k, l) * yv;
        }
        mixed[k] = u / (1.0 + (-z).exp());
    }
    (0..x.len())
        .map(|i| x[i] + (0..gate).map(|k| at(&p.output_proj, i, k) * mixed[k]).sum::<f64>())
        .collect()
}

fn criterion_9() -> Outcome {
    let x = [0.3, -1.25, 2.0, 0.0, 7.5];
    let y = [1.0, -2.0, 0.5];
    let forced = ScgbParams {
        input_proj: Matrix::identity(5),
        gate_proj: Matrix::zeros(5, 3),
        output_proj: Matrix::identity(5),
    };
    let out = scgb_fuse(&x, &y, &forced).map_err(|e| e.to_string())?;
    ensure!(out == x.map(|v| 1.5 * v).to_vec(), "forced gate: {out:?}");
    let zero = ScgbParams {
        input_proj: Matrix::zeros(4, 5),
        gate_proj: Matrix::zeros(4, 3),
        output_proj: Matrix::zeros(5, 4),
    };
    ensure!(scgb_fuse(&x, &y, &zero).map_err(|e| e.to_string())? == x.to_vec(), "zero projections do not pass through");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let (dx, dy, g) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6));
        let p = ScgbParams {
            input_proj: random_matrix(g, dx, &mut rng),
            gate_proj: random_matrix(g, dy, &mut rng),
            output_proj: random_matrix(dx, g, &mut rng),
        };
        let x: Vec<f64> = (0..dx).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..dy).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = scgb_fuse(&x, &y, &p).map_err(|e| e.to_string())?;
        for (a, b) in got.iter().zip(scgb_oracle(&x, &y, &p)) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(worst <= 1e-12, "max |diff| {worst:e}");
    Ok(format!("1.5x and passthrough exact; 1000 random blocks within {worst:.1e} of the loop oracle"))
}

// ---------------------------------------------------------------------------
// 10. Ensemble fusion

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

fn criterion_10() -> Outcome {
    let spec = FusionSpec::new(vec![7.0, 8.0], Normalization::None).map_err(|e| e.to_string())?;
    let a = vec![3.0, 1.0, 5.0, 2.0, 4.0];
    let b = vec![4.5, 1.0, 2.0, 3.5, 4.0];
    // (7a + 8b) / 15 by hand.
    let want = [3.8, 1.0, 3.4, 2.8, 4.0];
    let got = fuse_scores(&[a, b], &spec).map_err(|e| e.to_string())?;
    ensure!(got == want, "fused {got:?}, want {want:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..500 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(2..=40);
        let lists: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
        let c = [1e-3, 0.5, 3.0, 1e4][rng.random_range(0..4)];
        for norm in [Normalization::None, Normalization::Zscore] {
            let base = fuse_scores(&lists, &FusionSpec::new(weights.clone(), norm).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let scaled = FusionSpec::new(weights.iter().map(|w| w * c).collect(), norm).map_err(|e| e.to_string())?;
            let rescaled = fuse_scores(&lists, &scaled).map_err(|e| e.to_string())?;
            ensure!(argsort(&base) == argsort(&rescaled), "ranking changed under x{c} ({norm:?})");
        }
    }
    Ok("7:8 fusion matches hand values exactly; ranking unchanged under 500 random weight rescalings".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle equivalence", criterion_1),
        ("frame subset", criterion_2),
        ("level scoring", criterion_3),
        ("fragment sampling", criterion_4),
        ("gradient check", criterion_5),
        ("siamese learnability", criterion_6),
        ("forest sanity", criterion_7),
        ("efficiency protocol", criterion_8),
        ("fusion block algebra", criterion_9),
        ("ensemble fusion", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {label} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {label} ({secs:.1} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
