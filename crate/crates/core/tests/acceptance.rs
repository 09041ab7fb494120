//! Acceptance suite: one test per criterion, each emitting a single
//! PASS/FAIL line. The desk-scale experiment reports are computed once and
//! shared by the criteria that read them.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use active_partitioning::boundary::fit_boundary;
use active_partitioning::competition::{rank_predictions, Assignment, ModelPool};
use active_partitioning::data::{gen_anomaly_crest, gen_wave_climb, load_csv, Dataset};
use active_partitioning::harness::{compare, emit_report, performance_value, ComparisonReport};
use active_partitioning::lifecycle::{compute_loss_bound, drop_redundant, replacability};
use active_partitioning::nn::{mse_loss, Architecture, Network, NetworkDoc, TrainConfig};
use active_partitioning::{ExperimentConfig, ModelId};

const DESK_SEED: u64 = 2;

fn verdict(criterion: usize, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {status} — {detail}");
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn desk_report(function: &str) -> &'static ComparisonReport {
    static AC: OnceLock<ComparisonReport> = OnceLock::new();
    static WC: OnceLock<ComparisonReport> = OnceLock::new();
    let (cell, gen): (&OnceLock<_>, fn(usize, f64, u64) -> _) = match function {
        "anomaly-crest" => (&AC, gen_anomaly_crest),
        "wave-climb" => (&WC, gen_wave_climb),
        other => panic!("unknown function {other}"),
    };
    cell.get_or_init(|| {
        let cfg = ExperimentConfig::desk(DESK_SEED);
        let data = gen(cfg.points, cfg.noise_sd, DESK_SEED).unwrap();
        compare(&data, &cfg, None).unwrap()
    })
}

fn small_net(rng: &mut ChaCha8Rng) -> Network {
    let input = rng.random_range(1..=3usize);
    let output = rng.random_range(1..=2usize);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2usize))
        .map(|_| rng.random_range(2..=5usize))
        .collect();
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(output);
    Network::init(Architecture::new(sizes).unwrap(), 1e-3, rng.random()).unwrap()
}

/// Central finite differences of the batch MSE, computed through the public
/// checkpoint document so it is fully independent of the backprop code.
fn finite_diff(net: &Network, xs: &[Vec<f64>], ys: &[Vec<f64>], h: f64) -> Vec<f64> {
    let eval = |doc: NetworkDoc| {
        let n = doc.into_network().unwrap();
        let preds: Vec<Vec<f64>> = xs.iter().map(|x| n.forward(x).unwrap()).collect();
        mse_loss(&preds, ys).unwrap()
    };
    let mut grads = Vec::new();
    for l in 0..net.weights().len() {
        for (part, len) in [(0usize, net.weights()[l].len()), (1, net.biases()[l].len())] {
            for i in 0..len {
                let bump = |delta: f64| {
                    let mut doc = NetworkDoc::from(net);
                    if part == 0 {
                        doc.weights[l][i] += delta;
                    } else {
                        doc.biases[l][i] += delta;
                    }
                    eval(doc)
                };
                grads.push((bump(h) - bump(-h)) / (2.0 * h));
            }
        }
    }
    grads
}

#[test]
fn criterion_1_gradient_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let net = small_net(&mut rng);
        let d = net.architecture().input_dim();
        let m = net.architecture().output_dim();
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
        let analytic = net.backward(&xr, &yr).unwrap();
        let flat: Vec<f64> = analytic
            .d_weights
            .iter()
            .zip(&analytic.d_biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect();
        let numeric = finite_diff(&net, &xs, &ys, 1e-5);
        assert_eq!(flat.len(), numeric.len());
        for (a, n) in flat.iter().zip(&numeric) {
            let rel = (a - n).abs() / n.abs().max(1e-6);
            worst = worst.max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient oracle",
        worst < 1e-4 && secs < 10.0,
        &format!("20 nets, worst relative error {worst:.3e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_2_ranking_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut mismatches = 0usize;
    for _ in 0..10 {
        let data = gen_anomaly_crest(50, 0.01, rng.random()).unwrap().fit_apply_scaler();
        let mut pool = ModelPool::new();
        for _ in 0..3 {
            // Nets must match the 1-feature/1-label dataset.
            let hidden: Vec<usize> = (0..rng.random_range(1..=2usize))
                .map(|_| rng.random_range(2..=5usize))
                .collect();
            let mut sizes = vec![1];
            sizes.extend(hidden);
            sizes.push(1);
            pool.add(
                Network::init(Architecture::new(sizes).unwrap(), 1e-3, rng.random()).unwrap(),
            );
        }
        let a = rank_predictions(&pool, &data).unwrap();
        for i in 0..data.len() {
            // Independent exhaustive recomputation.
            let mut best_id = None;
            let mut best_loss = f64::INFINITY;
            for model in pool.models() {
                let pred = model.net.forward(&data.features[i]).unwrap();
                let loss: f64 = pred
                    .iter()
                    .zip(&data.labels[i])
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / data.labels[i].len() as f64;
                if loss < best_loss {
                    best_loss = loss;
                    best_id = Some(model.id);
                }
            }
            if a.winner[i] != best_id.unwrap() || a.best_loss(i) != best_loss {
                mismatches += 1;
            }
        }
    }
    verdict(
        2,
        "ranking brute-force equivalence",
        mismatches == 0,
        &format!("10 instances x 50 points, {mismatches} mismatches"),
    );
}

fn table_assignment(model_ids: Vec<ModelId>, losses: Vec<Vec<f64>>) -> Assignment {
    let winner = losses
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &l) in row.iter().enumerate() {
                if l < row[best] {
                    best = k;
                }
            }
            model_ids[best]
        })
        .collect();
    Assignment { model_ids, losses, winner }
}

fn fixed_pool(n: usize) -> ModelPool {
    let mut pool = ModelPool::new();
    for s in 0..n as u64 {
        pool.add(Network::init(Architecture::new(vec![1, 4, 1]).unwrap(), 0.001, s).unwrap());
    }
    pool
}

#[test]
fn criterion_3_lifecycle_oracles() {
    // Loss bound of [1,1,1,1,10]: mean 2.8 + std 3.6 = 6.4; only the outlier
    // is above it.
    let (bound, set) = compute_loss_bound(&[1.0, 1.0, 1.0, 1.0, 10.0]).unwrap();
    let bound_ok = (bound - 6.4).abs() < 1e-12 && set == vec![4];

    // Three-point table: A wins two points with losses 1 (runner-up 2, 3), B
    // wins one with loss 1; without A the total is 6 vs 3 => 2.0.
    let pool2 = fixed_pool(2);
    let (a, b) = (pool2.models()[0].id, pool2.models()[1].id);
    let table = table_assignment(
        vec![a, b],
        vec![vec![1.0, 2.0], vec![1.0, 3.0], vec![5.0, 1.0]],
    );
    let two_ok = (replacability(&pool2, &table, a).unwrap() - 2.0).abs() < 1e-12;

    // Removal causing 10% greater loss: 11/10 = 1.1 exactly.
    let ten = table_assignment(vec![a, b], vec![vec![10.0, 11.0]]);
    let ten_ok = (replacability(&pool2, &ten, a).unwrap() - 1.1).abs() < 1e-12;

    // A model and its exact clone: the clone wins nothing (ties go to the
    // lower id), its replacability is exactly 1, and one check drops it.
    let data = gen_anomaly_crest(80, 0.01, 3).unwrap().fit_apply_scaler();
    let mut pool = ModelPool::new();
    let mut net = Network::init(Architecture::new(vec![1, 6, 1]).unwrap(), 0.002, 5).unwrap();
    net.train(&data, &data.all_indices(), &TrainConfig { batch_size: 16, epochs: 20 })
        .unwrap();
    let keep = pool.add(net.clone());
    let clone_id = pool.add(net);
    let assignment = rank_predictions(&pool, &data).unwrap();
    let dropped = drop_redundant(&mut pool, &assignment, 1.8).unwrap();
    let clone_ok = dropped.map(|(id, _)| id) == Some(clone_id) && pool.contains(keep);

    // A sole model reports infinite replacability and survives any threshold.
    let mut sole = fixed_pool(1);
    let sid = sole.models()[0].id;
    let sa = table_assignment(vec![sid], vec![vec![1.0], vec![1.0]]);
    let sole_ok = replacability(&sole, &sa, sid).unwrap() == f64::INFINITY
        && drop_redundant(&mut sole, &sa, 100.0).unwrap().is_none()
        && sole.len() == 1;

    verdict(
        3,
        "lifecycle arithmetic oracles",
        bound_ok && two_ok && ten_ok && clone_ok && sole_ok,
        &format!(
            "bound {bound_ok}, table-2.0 {two_ok}, 1.1-case {ten_ok}, clone-drop {clone_ok}, sole-model {sole_ok}"
        ),
    );
}

#[test]
fn criterion_4_desk_scale_reproduction() {
    let mut details = Vec::new();
    let mut ok = true;
    for function in ["anomaly-crest", "wave-climb"] {
        let report = desk_report(function);
        let ratio = report.modular_mean_loss / report.single_mean_loss;
        ok &= ratio <= 0.5;
        details.push(format!(
            "{function}: modular {:.3e} vs single {:.3e} (ratio {ratio:.3})",
            report.modular_mean_loss, report.single_mean_loss
        ));
    }
    verdict(4, "desk-scale synthetic reproduction", ok, &details.join("; "));
}

#[test]
fn criterion_5_pattern_count_sanity() {
    let report = desk_report("anomaly-crest");
    let sizes: Vec<usize> = report.runs.iter().map(|r| r.final_pool_size).collect();
    let in_range = sizes.iter().filter(|&&s| (2..=6).contains(&s)).count();
    verdict(
        5,
        "pattern-count sanity",
        in_range >= 2,
        &format!("final pool sizes {sizes:?}, {in_range} of {} in [2,6]", sizes.len()),
    );
}

#[test]
fn criterion_6_boundary_classifier() {
    // Desk partitionings: per-run training-assignment accuracy.
    let mut accs = Vec::new();
    for function in ["anomaly-crest", "wave-climb"] {
        for r in &desk_report(function).runs {
            accs.push(r.boundary_training_accuracy);
        }
    }
    let desk_ok = accs.iter().all(|&a| a >= 0.9);

    // Separable two-cluster fixture: must be classified perfectly.
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut features = Vec::new();
    let mut labels: Vec<ModelId> = Vec::new();
    for _ in 0..40 {
        features.push(vec![
            -0.6 + rng.random_range(-0.2..0.2),
            -0.6 + rng.random_range(-0.2..0.2),
        ]);
        labels.push(0);
        features.push(vec![
            0.6 + rng.random_range(-0.2..0.2),
            0.6 + rng.random_range(-0.2..0.2),
        ]);
        labels.push(1);
    }
    let boundary = fit_boundary(&features, &labels, 1.0, 0.5, 9).unwrap();
    let cluster_acc = boundary.training_accuracy(&features, &labels).unwrap();

    verdict(
        6,
        "boundary classifier accuracy",
        desk_ok && cluster_acc == 1.0,
        &format!(
            "desk accuracies {:?}, two-cluster accuracy {cluster_acc}",
            accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_7_performance_metric_exactness() {
    let up = performance_value(100.0, 80.0).unwrap();
    let down = performance_value(100.0, 120.0).unwrap();
    verdict(
        7,
        "performance metric exactness",
        up == 20.0 && down == -20.0,
        &format!("(100,80) -> {up}, (100,120) -> {down}"),
    );
}

#[test]
fn criterion_8_budget_fairness() {
    let mut ok = true;
    let mut details = Vec::new();
    for function in ["anomaly-crest", "wave-climb"] {
        for r in &desk_report(function).runs {
            ok &= r.single_param_count <= r.modular_total_params;
            details.push(format!("{}<={}", r.single_param_count, r.modular_total_params));
        }
    }
    verdict(
        8,
        "budget fairness audit",
        ok,
        &format!("single vs modular params per run: {}", details.join(", ")),
    );
}

#[test]
fn criterion_9_report_determinism() {
    // Full pipeline (adding, dropping, search, SVM, rayon) at a reduced size,
    // executed twice from the same master seed.
    let cfg = ExperimentConfig {
        repeats: 2,
        partition_epochs: 40,
        initial_models: 4,
        search_runs: 5,
        expert_epochs: 60,
        points: 400,
        ..ExperimentConfig::desk(7)
    };
    let data = gen_anomaly_crest(cfg.points, cfg.noise_sd, 7).unwrap();
    let first = compare(&data, &cfg, None).unwrap().to_json().unwrap();
    let second = compare(&data, &cfg, None).unwrap().to_json().unwrap();
    verdict(
        9,
        "report determinism",
        first == second,
        &format!("two executions, {} bytes each, byte-identical: {}", first.len(), first == second),
    );
}

#[test]
fn criterion_10_external_csv_structural() {
    // An energy-efficiency-shaped dataset: 768 rows, 8 building features, 2
    // load labels, synthesized since the external data cannot ship here.
    let dir = std::env::temp_dir().join(format!("apart_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("energy.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut text = String::from("X1,X2,X3,X4,X5,X6,X7,X8,Y1,Y2\n");
    for _ in 0..768 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..10.0)).collect();
        let y1 = x[0] * 2.0 - x[4] + 0.1 * x[6] * x[6] + rng.random_range(-0.5..0.5);
        let y2 = x[1] + 0.5 * x[3] - 0.2 * x[7] + rng.random_range(-0.5..0.5);
        let row: Vec<String> = x.iter().chain([&y1, &y2]).map(|v| format!("{v:.4}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&csv_path, text).unwrap();

    let features: Vec<String> = (1..=8).map(|i| format!("X{i}")).collect();
    let labels = vec!["Y1".to_string(), "Y2".to_string()];
    let load = load_csv(&csv_path, &features, &labels).unwrap();
    let data: Dataset = load.dataset;

    // Paper profile, sized down so the structural check completes in test
    // time; the pipeline (multivariate ingestion, partitioning, gating,
    // budget-matched baseline, report emission) is exercised end to end.
    let cfg = ExperimentConfig {
        repeats: 1,
        partition_epochs: 30,
        initial_models: 4,
        search_runs: 4,
        expert_epochs: 40,
        candidate_epochs: 20,
        ..ExperimentConfig::paper(11)
    };
    let report = compare(&data, &cfg, None).unwrap();
    let out = dir.join("energy_report");
    emit_report(&report, &out).unwrap();

    let restored = ComparisonReport::from_json(
        &std::fs::read_to_string(out.join("report.json")).unwrap(),
    )
    .unwrap();
    let structural = restored == report
        && report.runs.len() == 1
        && report.runs[0].n_experts >= 1
        && report
            .runs
            .iter()
            .all(|r| r.partition_proportions.iter().sum::<f64>() - 1.0 < 1e-9)
        && out.join("runs.csv").exists()
        && out.join("histogram.svg").exists();
    verdict(
        10,
        "external CSV structural run",
        structural,
        &format!(
            "8-feature/2-label CSV, {} experts, report round-trips and all files emitted",
            report.runs[0].n_experts
        ),
    );
}
