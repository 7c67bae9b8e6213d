//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use ensemblekit::augment::{apply_pipeline, flip_h, rotate, AugmentConfig, Image};
use ensemblekit::ensemble::{average_probs, label_fusion_predict, plurality_vote, TieBreak};
use ensemblekit::fusion::{loss_and_gradient, mean_loss, train, Dense, FusionNetwork, TrainConfig};
use ensemblekit::harness::{check_published_rows, published_rows, SCORE_TOLERANCE};
use ensemblekit::metrics::{compute_auc, compute_ece, evaluate, overall_score};
use ensemblekit::predictions::{align_panel, PredictionPanel, PredictionSet};
use ensemblekit::rng::SplitMix64;
use ensemblekit::synthgen::{
    binormal_auc, generate_calibrated_set, generate_panel, SyntheticModel, SyntheticSpec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Criterion 1: six consistent published rows reproduce to ±5e-4.
fn score_formula() -> Outcome {
    let expected = [
        ("Resnet-50", 1.4449),
        ("Resnet-152", 1.47875),
        ("Densenet-121", 1.5262),
        ("EfficientNet-b7", 1.46325),
        ("Plurality voting", 1.3862),
        ("Averaging", 1.2939),
    ];
    let rows = published_rows();
    let mut worst: f64 = 0.0;
    for (name, printed) in expected {
        let r = rows
            .iter()
            .find(|r| r.name == name)
            .ok_or(format!("missing row {name}"))?;
        let s = overall_score(r.auc, r.f1, r.ece);
        worst = worst.max((s - printed).abs());
    }
    check(
        worst <= 5e-4,
        format!("max |S − printed| = {worst:.2e} over 6 rows"),
    )
}

/// Criterion 2: exactly VGG-19 and Label Fusion are flagged.
fn inconsistency_detection() -> Outcome {
    let checks = check_published_rows(&published_rows());
    let flagged: Vec<_> = checks.iter().filter(|c| c.flagged).collect();
    let names: Vec<&str> = flagged.iter().map(|c| c.name.as_str()).collect();
    let recomputed = |n: &str| {
        checks
            .iter()
            .find(|c| c.name == n)
            .map(|c| c.recomputed)
            .unwrap_or(f64::NAN)
    };
    let ok = names == ["VGG-19", "Label Fusion"]
        && (recomputed("VGG-19") - 1.3731).abs() < 1e-9
        && (recomputed("Label Fusion") - 1.3843).abs() < 1e-9
        && SCORE_TOLERANCE == 5e-4;
    check(
        ok,
        format!(
            "flagged {names:?}; recomputed VGG-19 {:.4}, Label Fusion {:.4}",
            recomputed("VGG-19"),
            recomputed("Label Fusion")
        ),
    )
}

fn brute_force_auc(probs: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in probs.iter().enumerate() {
        for (j, &q) in probs.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Criterion 3: 200 random tied instances agree with the pairwise oracle.
fn auc_oracle() -> Outcome {
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    let mut tied = 0;
    for _ in 0..200 {
        let (probs, labels) = loop {
            let n = 2 + rng.below(49) as usize;
            let mut probs: Vec<f64> = Vec::with_capacity(n);
            for i in 0..n {
                if i > 0 && rng.bernoulli(0.2) {
                    let j = rng.below(i as u64) as usize;
                    probs.push(probs[j]);
                } else {
                    probs.push(rng.next_f64());
                }
            }
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
            if labels.contains(&0) && labels.contains(&1) {
                break (probs, labels);
            }
        };
        let mut sorted = probs.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < probs.len() {
            tied += 1;
        }
        let auc = compute_auc(&probs, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((auc - brute_force_auc(&probs, &labels)).abs());
    }
    check(
        worst <= 1e-12,
        format!("max |Δ| = {worst:.2e} over 200 instances ({tied} with ties)"),
    )
}

/// Criterion 4: calibrated source has ECE < 0.01; an overconfident one > 0.05.
fn ece_calibration() -> Outcome {
    let set: PredictionSet<f64> = generate_calibrated_set(100_000, 7).map_err(|e| e.to_string())?;
    let probs = set.probs();
    let labels = set.labels();
    let ece = compute_ece(&probs, &labels, 10).map_err(|e| e.to_string())?;
    let pushed: Vec<f64> = probs.iter().map(|p| p + (1.0 - p) / 2.0).collect();
    let over = compute_ece(&pushed, &labels, 10).map_err(|e| e.to_string())?;
    check(
        ece < 0.01 && over > 0.05,
        format!("calibrated ECE {ece:.4}, overconfident ECE {over:.4}"),
    )
}

fn random_network(rng: &mut SplitMix64) -> FusionNetwork<f64> {
    let m = 1 + rng.below(5) as usize;
    let h1 = 1 + rng.below(8) as usize;
    let h2 = 1 + rng.below(6) as usize;
    let dims = vec![m, h1, h2, 1];
    let layers = dims
        .windows(2)
        .map(|d| {
            let mut l = Dense::zeros(d[0], d[1]);
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = rng.uniform(-1.0, 1.0);
            }
            l
        })
        .collect();
    FusionNetwork::from_parts(dims, vec![], layers, TrainConfig::default())
        .expect("valid random net")
}

/// Criterion 5: analytic gradients match central differences (h = 1e-5).
fn gradient_check() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for _ in 0..100 {
        let net = random_network(&mut rng);
        let m = net.n_inputs();
        let batch = 1 + rng.below(8) as usize;
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..m).map(|_| rng.next_f64()).collect())
            .collect();
        let ys: Vec<u8> = (0..batch).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let (_, grads) = loss_and_gradient(&net, &xs, &ys).map_err(|e| e.to_string())?;
        for (l, layer) in net.layers().iter().enumerate() {
            let n_w = layer.weights.len();
            for k in 0..n_w + layer.bias.len() {
                let perturbed = |delta: f64| {
                    let mut p = net.clone();
                    let target = &mut p.layers_mut()[l];
                    if k < n_w {
                        target.weights[k] += delta;
                    } else {
                        target.bias[k - n_w] += delta;
                    }
                    mean_loss(&p, &xs, &ys).expect("loss")
                };
                let numeric = (perturbed(step) - perturbed(-step)) / (2.0 * step);
                let analytic = if k < n_w {
                    grads.layers[l].weights[k]
                } else {
                    grads.layers[l].bias[k - n_w]
                };
                let scale = analytic.abs().max(numeric.abs());
                let rel = if scale == 0.0 {
                    0.0
                } else {
                    (analytic - numeric).abs() / scale
                };
                worst = worst.max(rel);
                compared += 1;
            }
        }
    }
    check(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {compared} components"),
    )
}

fn informative_panel() -> Result<PredictionPanel<f64>, String> {
    let mut models = vec![SyntheticModel {
        name: "strong".into(),
        separation: 2.0,
        noise: 1.0,
    }];
    models.extend((1..5).map(|i| SyntheticModel {
        name: format!("noise_{i}"),
        separation: 0.0,
        noise: 1.0,
    }));
    let spec = SyntheticSpec {
        n_pos: 500,
        n_neg: 500,
        models,
        correlation: 0.0,
        seed: 42,
    };
    generate_panel(&spec).map_err(|e| e.to_string())
}

/// Criterion 6: fusion learns to trust the informative model.
fn fusion_training() -> Outcome {
    let panel = informative_panel()?;
    let cfg = TrainConfig::default();
    let trained = train(&panel, &cfg).map_err(|e| e.to_string())?;
    let val = panel
        .subset(&trained.split.validation)
        .map_err(|e| e.to_string())?;
    let fused = label_fusion_predict(&trained.network, &val).map_err(|e| e.to_string())?;
    let voted = plurality_vote(&val, 0.5, TieBreak::Positive).map_err(|e| e.to_string())?;
    let f = evaluate(&fused.fused, 10).map_err(|e| e.to_string())?;
    let v = evaluate(&voted.fused, 10).map_err(|e| e.to_string())?;
    let strong = evaluate(&val.models()[0], 10).map_err(|e| e.to_string())?;
    check(
        f.auc >= 0.85 && f.overall > v.overall,
        format!(
            "fusion AUC {:.4} S {:.4} vs voting S {:.4} (strong member AUC {:.4}, best epoch {})",
            f.auc, f.overall, v.overall, strong.auc, trained.log.best_epoch
        ),
    )
}

/// Criterion 7: averaging/voting algebra and the tie rule.
fn ensemble_algebra() -> Outcome {
    let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
    let labels = [1, 0, 1, 0, 1, 0];
    let member =
        PredictionSet::from_columns("m", &ids, &labels, &[0.91, 0.13, 0.5, 0.49, 0.7777, 0.0])
            .map_err(|e| e.to_string())?;
    let identical = align_panel((0..4).map(|i| member.clone().with_model_name(format!("m{i}"))))
        .map_err(|e| e.to_string())?;
    let averaged = average_probs(&identical).map_err(|e| e.to_string())?;
    let avg_exact = averaged.fused.probs() == member.probs();

    let unanimous = align_panel(vec![
        PredictionSet::from_columns("a", &ids[..2], &[1, 0], &[0.9, 0.2])
            .map_err(|e| e.to_string())?,
        PredictionSet::from_columns("b", &ids[..2], &[1, 0], &[0.6, 0.1])
            .map_err(|e| e.to_string())?,
        PredictionSet::from_columns("c", &ids[..2], &[1, 0], &[0.7, 0.4])
            .map_err(|e| e.to_string())?,
    ])
    .map_err(|e| e.to_string())?;
    let votes = plurality_vote(&unanimous, 0.5, TieBreak::Positive)
        .map_err(|e| e.to_string())?
        .fused
        .probs();
    let unanimous_ok = votes == [1.0, 0.0];

    let tie = align_panel(vec![
        PredictionSet::from_columns("a", &ids[..1], &[1], &[0.9]).map_err(|e| e.to_string())?,
        PredictionSet::from_columns("b", &ids[..1], &[1], &[0.1]).map_err(|e| e.to_string())?,
    ])
    .map_err(|e| e.to_string())?;
    let tied = plurality_vote(&tie, 0.5, TieBreak::Positive).map_err(|e| e.to_string())?;
    let tie_ok = tied.fused.probs() == [0.5] && tied.predicted_classes() == [1];
    check(
        avg_exact && unanimous_ok && tie_ok,
        format!(
            "identical-average exact: {avg_exact}; unanimous votes {votes:?}; tie → {:?}",
            tied.fused.probs()
        ),
    )
}

/// Criterion 8: flips, rotation identity, pipeline size and determinism.
fn augmentation() -> Outcome {
    let mut rng = SplitMix64::new(8);
    let photo = Image::from_fn(317, 251, 3, |_, _, _| rng.next_f64()).map_err(|e| e.to_string())?;
    let flip_ok = flip_h(&flip_h(&photo)) == photo;
    let r0 = rotate(&photo, 0.0, 0.0);
    let rot0 = photo
        .data()
        .iter()
        .zip(r0.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let cfg = AugmentConfig::default();
    let mut sizes_ok = true;
    for (seed, (w, h)) in [
        (1u64, (317, 251)),
        (2, (224, 224)),
        (3, (40, 600)),
        (4, (1, 1)),
    ] {
        let img = Image::filled(w, h, 3, 0.4).map_err(|e| e.to_string())?;
        let out =
            apply_pipeline(&img, &cfg, &mut SplitMix64::new(seed)).map_err(|e| e.to_string())?;
        sizes_ok &= out.width() == 224 && out.height() == 224;
    }
    let a = apply_pipeline(&photo, &cfg, &mut SplitMix64::new(11)).map_err(|e| e.to_string())?;
    let b = apply_pipeline(&photo, &cfg, &mut SplitMix64::new(11)).map_err(|e| e.to_string())?;
    let bytes = |img: &Image<f64>| {
        img.data()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect::<Vec<u8>>()
    };
    let deterministic = bytes(&a) == bytes(&b);

    let n = 101;
    let c = 50.0;
    let disk = Image::from_fn(n, n, 1, |x, y, _| {
        let r2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
        (-r2 / 800.0).exp()
    })
    .map_err(|e| e.to_string())?;
    let turned = rotate(&disk, 45.0, 0.0);
    let mut radial: f64 = 0.0;
    for y in 0..n {
        for x in 0..n {
            if ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() < c - 1.0 {
                radial = radial.max((turned.get(x, y, 0) - disk.get(x, y, 0)).abs());
            }
        }
    }
    check(
        flip_ok && rot0 <= 1e-12 && sizes_ok && deterministic && radial < 1e-3,
        format!(
            "double flip identity {flip_ok}; rotate(0) max err {rot0:.1e}; 224x224 {sizes_ok}; deterministic {deterministic}; disk 45° max dev {radial:.2e}"
        ),
    )
}

/// Criterion 9: binormal AUC converges at N = 10^6.
fn synthetic_convergence() -> Outcome {
    let spec = SyntheticSpec::uniform(500_000, 500_000, 1, 2.0, 1.0, 9);
    let panel: PredictionPanel<f64> = generate_panel(&spec).map_err(|e| e.to_string())?;
    let m = &panel.models()[0];
    let empirical = compute_auc(&m.probs(), &m.labels()).map_err(|e| e.to_string())?;
    let theory = binormal_auc(2.0, 1.0);
    check(
        (empirical - theory).abs() < 0.005 && (theory - 0.9214).abs() < 1e-4,
        format!("empirical {empirical:.5} vs Φ(d/√2) = {theory:.5}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "1 score-formula reproduction",
            score_formula,
            Duration::from_secs(1),
        ),
        (
            "2 inconsistency detection",
            inconsistency_detection,
            Duration::from_secs(1),
        ),
        (
            "3 AUC oracle equivalence",
            auc_oracle,
            Duration::from_secs(1),
        ),
        (
            "4 ECE calibration property",
            ece_calibration,
            Duration::from_secs(5),
        ),
        (
            "5 gradient correctness",
            gradient_check,
            Duration::from_secs(5),
        ),
        (
            "6 fusion-training sanity",
            fusion_training,
            Duration::from_secs(30),
        ),
        (
            "7 ensemble algebra",
            ensemble_algebra,
            Duration::from_secs(1),
        ),
        (
            "8 augmentation invariants",
            augmentation,
            Duration::from_secs(10),
        ),
        (
            "9 synthetic oracle convergence",
            synthetic_convergence,
            Duration::from_secs(10),
        ),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over runtime budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "[{status}] criterion {name}: {detail} ({:.2}s)",
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
