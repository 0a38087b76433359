//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heartsense::aeho::{run_aeho, AehoConfig};
use heartsense::dataio::BinaryLabel;
use heartsense::mcfa::{logistic, optimize_continuous, run_mcfa, ChaosMap, FeatureMask, McfaConfig};
use heartsense::metrics::{compute_metrics, confusion, prevalence_sweep};
use heartsense::network::{backprop_step, flatten, predict, unflatten, DeltaMode, NetworkSpec, NetworkWeights};
use heartsense::pipeline::{
    evaluate, load_dataset, rows_as_json_lines, train_pipeline, Evaluation, ExperimentConfig, TrainingRun,
};
use heartsense::Bounds;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Each rate computed straight from the label lists.
fn oracle(pred: &[bool], truth: &[bool]) -> BTreeMap<&'static str, Option<f64>> {
    let n = pred.len();
    let count = |f: &dyn Fn(bool, bool) -> bool| pred.iter().zip(truth).filter(|(&p, &t)| f(p, t)).count();
    let frac = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let correct = count(&|p, t| p == t);
    let pos_pred = count(&|p, _| p);
    let neg_pred = n - pos_pred;
    let actual_pos = count(&|_, t| t);
    let actual_neg = n - actual_pos;
    let hit = count(&|p, t| p && t);
    let reject = count(&|p, t| !p && !t);
    let ppv = frac(hit, pos_pred);
    let sens = frac(hit, actual_pos);
    let f1 = match (ppv, sens) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    BTreeMap::from([
        ("accuracy", frac(correct, n)),
        ("error", frac(n - correct, n)),
        ("prevalence", frac(actual_pos, n)),
        ("ppv", ppv),
        ("npv", frac(reject, neg_pred)),
        ("sensitivity", sens),
        ("specificity", frac(reject, actual_neg)),
        ("f1", f1),
    ])
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=1000);
        let bias: f64 = rng.random();
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(bias)).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(bias)).collect();
        let p: Vec<BinaryLabel> = pred.iter().map(|&b| b.into()).collect();
        let t: Vec<BinaryLabel> = truth.iter().map(|&b| b.into()).collect();
        let m = compute_metrics(&confusion(&p, &t).unwrap()).unwrap();
        let got = BTreeMap::from([
            ("accuracy", m.accuracy),
            ("error", m.error),
            ("prevalence", m.prevalence),
            ("ppv", m.ppv),
            ("npv", m.npv),
            ("sensitivity", m.sensitivity),
            ("specificity", m.specificity),
            ("f1", m.f1),
        ]);
        for (k, want) in oracle(&pred, &truth) {
            match (got[k], want) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => mismatches += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && mismatches == 0 && within(elapsed, 10),
        format!("max abs diff {worst:e}, definedness mismatches {mismatches}, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..100 {
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=8)).collect();
        let spec = NetworkSpec::with_hidden(rng.random_range(1..=8), &hidden).unwrap();
        let w = NetworkWeights::random(&spec, 1.0, &mut rng);
        let x: Vec<f64> = (0..spec.inputs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let alpha = 0.1;
        let stepped = flatten(&backprop_step(&spec, &w, &x, target, alpha, DeltaMode::Derivative).unwrap());
        let base = flatten(&w);
        for k in 0..base.len() {
            let loss = |d: f64| {
                let mut p = base.clone();
                p[k] += d;
                let y = predict(&spec, &unflatten(&spec, &p).unwrap(), &x).unwrap();
                0.5 * (target - y) * (target - y)
            };
            let fd = (loss(h) - loss(-h)) / (2.0 * h);
            let expected = base[k] - alpha * fd;
            let rel = (stepped[k] - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && within(elapsed, 30),
        format!("{checked} parameters, max relative error {worst:e}, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut escaped = 0usize;
    for _ in 0..100 {
        let mut x: f64 = rng.random();
        for _ in 0..100_000 {
            // the unclamped product must already be inside [0, 1]
            let raw = 4.0 * (x * (1.0 - x));
            x = logistic(4.0, x);
            if !(0.0..=1.0).contains(&raw) || !(0.0..=1.0).contains(&x) {
                escaped += 1;
            }
        }
    }
    let mut not_stationary = Vec::new();
    for delta in [0.5, 1.0, 2.0, 2.5, 3.0, 3.5, 3.9, 4.0] {
        if logistic(delta, 0.0) != 0.0 {
            not_stationary.push(format!("0 at delta {delta}"));
        }
        if let Some(fp) = ChaosMap::fixed_point(delta) {
            let mut m = ChaosMap::new(delta, fp, fp).unwrap();
            let (a, _) = m.step();
            if (a - fp).abs() > 1e-12 {
                not_stationary.push(format!("{fp} at delta {delta}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        escaped == 0 && not_stationary.is_empty() && within(elapsed, 5),
        format!("10^5-step orbits x100, {escaped} escapes, non-stationary points {not_stationary:?}, {elapsed:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut bests = Vec::new();
    for seed in 0..10 {
        let cfg = AehoConfig {
            max_generations: 200,
            seed,
            ..Default::default()
        };
        let out = run_aeho(|x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>(), 10, &cfg).unwrap();
        if out.best.fitness > -1e-2 {
            hits += 1;
        }
        bests.push(format!("{:.1e}", out.best.fitness));
    }
    let elapsed = start.elapsed();
    outcome(
        hits >= 8 && within(elapsed, 60),
        format!("{hits}/10 seeds within 1e-2, best fitness per seed {bests:?}, {elapsed:.2?}"),
    )
}

/// 10 uniform features; the label is set by features 0, 3 and 7 only.
fn planted_data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.random()).collect()).collect();
    let y = x.iter().map(|r| r[0] + r[3] + r[7] > 1.5).collect();
    (x, y)
}

/// Nearest-centroid validation accuracy on the selected columns.
fn centroid_accuracy(x: &[Vec<f64>], y: &[bool], mask: &FeatureMask) -> f64 {
    let cols = mask.indices();
    let half = x.len() / 2;
    let mut centroid = [vec![0.0; cols.len()], vec![0.0; cols.len()]];
    let mut counts = [0.0; 2];
    for i in 0..half {
        let c = usize::from(y[i]);
        counts[c] += 1.0;
        for (k, &j) in cols.iter().enumerate() {
            centroid[c][k] += x[i][j];
        }
    }
    for c in 0..2 {
        for v in centroid[c].iter_mut() {
            *v /= counts[c];
        }
    }
    let correct = (half..x.len())
        .filter(|&i| {
            let d = |c: usize| {
                cols.iter()
                    .enumerate()
                    .map(|(k, &j)| (x[i][j] - centroid[c][k]).powi(2))
                    .sum::<f64>()
            };
            (d(1) < d(0)) == y[i]
        })
        .count();
    correct as f64 / (x.len() - half) as f64
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut masks = Vec::new();
    for seed in 0..10 {
        let (x, y) = planted_data(100 + seed, 600);
        let cfg = McfaConfig {
            population: 20,
            generations: 50,
            seed,
            ..Default::default()
        };
        let lambda = cfg.lambda;
        let fitness = |m: &FeatureMask| centroid_accuracy(&x, &y, m) - lambda * m.count() as f64 / m.len() as f64;
        let out = run_mcfa(fitness, 10, &cfg).unwrap();
        if [0, 3, 7].iter().all(|&j| out.mask.is_selected(j)) {
            hits += 1;
        }
        masks.push(out.mask.to_string());
    }
    let elapsed = start.elapsed();
    outcome(
        hits >= 9 && within(elapsed, 120),
        format!("{hits}/10 seeds select all planted features, masks {masks:?}, {elapsed:.2?}"),
    )
}

struct Cleveland {
    run: TrainingRun,
    eval: Evaluation,
    elapsed: Duration,
}

fn cleveland() -> &'static Cleveland {
    static CELL: std::sync::OnceLock<Cleveland> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let config = ExperimentConfig::new(root().join("data/cleveland.csv"));
        let run = train_pipeline(&config).expect("training");
        let ds = load_dataset(&config.dataset_path()).expect("dataset");
        let eval = evaluate(&run.model, &ds, config.folds).expect("evaluation");
        Cleveland {
            run,
            eval,
            elapsed: start.elapsed(),
        }
    })
}

fn criterion_6() -> Outcome {
    let c = cleveland();
    let acc = c.eval.aggregate.accuracy.unwrap_or(0.0);
    let k = c.run.model.mask.count();
    let folds_ok = c.eval.successes().count();
    let names: Vec<&str> = c.run.model.selected().iter().map(|a| a.name()).collect();
    outcome(
        c.eval.data.len() == 303 && folds_ok == 10 && acc >= 0.80 && (4..=10).contains(&k) && within(c.elapsed, 600),
        format!(
            "{} records, {folds_ok}/10 folds, mean accuracy {acc:.4}, {k} features [{}], {:.1?}",
            c.eval.data.len(),
            names.join(","),
            c.elapsed
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let mut violations = 0;
    for _ in 0..100 {
        let sens = 1.0 - rng.random::<f64>();
        let spec = 1.0 - rng.random::<f64>();
        let pts = prevalence_sweep(sens, spec, &grid).unwrap();
        violations += pts.windows(2).filter(|w| w[1].ppv < w[0].ppv).count();
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && within(elapsed, 1),
        format!("100 (sens, spec) pairs x 99 levels, {violations} decreases, {elapsed:.2?}"),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_heartsense")
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        "dataset = {:?}\noutput_dir = \"out\"\nseed = 5\n[mcfa]\npopulation = 8\ngenerations = 2\n[aeho]\nmax_generations = 5\n[backprop]\nepochs = 10\n",
        root().join("data/cleveland.csv")
    );
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, config).unwrap();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let status = Command::new(bin())
            .args(["train", "--config"])
            .arg(&cfg_path)
            .stdout(Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return outcome(false, format!("train exited with {status}"));
        }
        let mut files = BTreeMap::new();
        for e in std::fs::read_dir(dir.path().join("out")).unwrap() {
            let p = e.unwrap().path();
            files.insert(
                p.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&p).unwrap(),
            );
        }
        snapshots.push(files);
    }
    outcome(
        snapshots[0] == snapshots[1],
        format!("{} artifacts byte-identical across two runs", snapshots[0].len()),
    )
}

fn criterion_9() -> Outcome {
    let c = cleveland();
    let dir = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut mismatches = 0;
    for fold in &c.eval.folds {
        let Ok(result) = &fold.outcome else { continue };
        let model_path = dir.path().join(format!("fold{}.json", fold.index));
        std::fs::write(&model_path, result.model.to_json()).unwrap();
        let input = rows_as_json_lines(&c.eval.data, &fold.test_rows);
        let mut child = Command::new(bin())
            .args(["stream", "--model"])
            .arg(&model_path)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        if lines.len() != result.predictions.len() {
            mismatches += result.predictions.len();
            continue;
        }
        for (line, p) in lines.iter().zip(&result.predictions) {
            compared += 1;
            let same = line["id"].as_u64() == Some(p.row as u64)
                && line["label"].as_u64() == Some(u64::from(p.label.value()))
                && line["score"].as_f64().map(f64::to_bits) == Some(p.score.to_bits());
            if !same {
                mismatches += 1;
            }
        }
    }
    outcome(
        compared == c.eval.data.len() && mismatches == 0,
        format!(
            "{compared} records replayed over {} folds, {mismatches} mismatches",
            c.eval.folds.len()
        ),
    )
}

/// Deterministic pseudo-random fitness of a point.
fn hashed(x: &[f64]) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn criterion_10() -> Outcome {
    let non_decreasing = |h: &[f64]| h.windows(2).all(|w| w[1] >= w[0]);
    let mcfa = optimize_continuous(
        hashed,
        5,
        &McfaConfig {
            population: 8,
            generations: 1000,
            seed: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let aeho = run_aeho(
        hashed,
        5,
        &AehoConfig {
            clans: 2,
            clan_size: 4,
            max_generations: 1000,
            bounds: Bounds::new(-1.0, 1.0).unwrap(),
            seed: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let ok = mcfa.history.len() == 1000 && aeho.history.len() == 1000;
    outcome(
        ok && non_decreasing(&mcfa.history) && non_decreasing(&aeho.history),
        format!(
            "1000 generations each, mcfa {:.4} -> {:.4}, aeho {:.4} -> {:.4}",
            mcfa.history[0], mcfa.history[999], aeho.history[0], aeho.history[999]
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1", "metric oracle equivalence", criterion_1),
        ("2", "backprop gradient check", criterion_2),
        ("3", "chaos-map safety", criterion_3),
        ("4", "AEHO sphere convergence", criterion_4),
        ("5", "MCFA planted-feature recovery", criterion_5),
        ("6", "Cleveland 10-fold sanity floor", criterion_6),
        ("7", "PPV monotone in prevalence", criterion_7),
        ("8", "train determinism", criterion_8),
        ("9", "batch/stream parity", criterion_9),
        ("10", "optimizer elitism", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}: {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
