//! End-to-end acceptance checks. Every test prints one PASS/FAIL line to
//! stderr (bypassing output capture) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use fogforge::checkpoint::Checkpoint;
use fogforge::run::read_solutions;
use fogforge::train::{evaluate_baseline, evaluate_policy, train, Datasets, Instance, TrainConfig};
use fogforge_core::agent::{clipped_surrogate, infer_placement, PolicyConfig, PolicyModel};
use fogforge_core::baselines::{run_baseline, StrategyKind};
use fogforge_core::env::{Action, PlacementEnv};
use fogforge_core::evo::{ga_solve, nsga2_solve, EvoConfig};
use fogforge_core::gin::{Gin, GinConfig};
use fogforge_core::instance::{generate_scenario, ScenarioConfig};
use fogforge_core::model::{evaluate, latency_contributions, response_time};
use fogforge_core::nn::{Activation, BatchNorm, Matrix, Mlp, MlpSpec, NormMode, ParamStore, Tape, Var};
use fogforge_core::oracle::{brute_force, DEFAULT_ENUMERATION_CAP};
use fogforge_core::pareto::nondominated_indices;
use fogforge_core::{
    Application, Device, DeviceSet, NormalizationBounds, ObjectivePoint, Placement, ServiceId, WeightVector,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:02} {status} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn dev(id: usize, latency: f64, cost: f64) -> Device {
    Device { id, speed: 1.0, latency, cost, is_cloud: id == 0 }
}

/// Response time by walking the edge list: execution time of every
/// service, access latency of every row head, and the target latency of
/// each edge that crosses devices.
fn edge_walk(ops: &[Vec<f64>], edges: &[(ServiceId, ServiceId)], hosts: &[Vec<usize>], d: &[Device]) -> f64 {
    let mut t = 0.0;
    for (i, row) in ops.iter().enumerate() {
        t += d[hosts[i][0]].latency;
        for (j, o) in row.iter().enumerate() {
            t += o / d[hosts[i][j]].speed;
        }
    }
    for (a, b) in edges {
        if hosts[a.row][a.col] != hosts[b.row][b.col] {
            t += d[hosts[b.row][b.col]].latency;
        }
    }
    t
}

#[test]
fn criterion_01_worked_example() {
    let s = ServiceId::new;
    let ops = vec![vec![0.0; 3]; 3];
    let extra = [(s(0, 0), s(1, 0)), (s(0, 1), s(1, 1)), (s(1, 0), s(2, 0)), (s(0, 2), s(2, 1))];
    let app = Application::new(ops.clone(), &extra).unwrap();
    let devices = DeviceSet::new(vec![dev(0, 50.0, 20.0), dev(1, 2.0, 5.0), dev(2, 6.0, 5.0), dev(3, 10.0, 5.0), dev(4, 3.0, 5.0)])
        .unwrap();
    let hosts = vec![vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 4]];
    let placement = Placement::new(hosts.concat());
    let t = response_time(&app, &placement, &devices).unwrap();
    let edges: Vec<_> = app.edge_ids().collect();
    let oracle = edge_walk(&ops, &edges, &hosts, devices.as_slice());
    let contrib = latency_contributions(&app, &placement, &devices).unwrap();
    let expected = vec![0.0, 0.0, 0.0, 6.0, 6.0, 0.0, 10.0, 10.0, 3.0];
    report(
        1,
        "worked example",
        t == 53.0 && oracle == 53.0 && contrib == expected,
        &format!("T_app = {t} (edge walk {oracle}), contributions {contrib:?}"),
    );
}

#[test]
fn criterion_02_reward_accounting() {
    // One row of three chained zero-work services; the cloud is the slowest
    // access point and three edge devices are visited in order.
    let app = Application::new(vec![vec![0.0; 3]], &[]).unwrap();
    let devices = DeviceSet::new(vec![dev(0, 60.0, 20.0), dev(1, 15.0, 5.0), dev(2, 2.0, 5.0), dev(3, 30.0, 5.0)]).unwrap();
    let time_only = WeightVector::new(1.0, 0.0).unwrap();
    let mut env = PlacementEnv::new(&app, &devices).unwrap();
    let mut rewards = vec![env.initial_record(time_only).r_time];
    let mut times = vec![env.objective().time];
    for (service, device) in [(0, 1), (1, 2), (2, 3)] {
        let out = env.step(Action { service, device }, time_only).unwrap();
        rewards.push(out.reward.r_time);
        times.push(out.point.time);
    }
    let total: f64 = rewards.iter().sum();
    let pass = rewards == [-60.0, -15.0, -2.0, 30.0] && times == [60.0, 75.0, 77.0, 47.0] && -total == 47.0;
    report(2, "reward accounting", pass, &format!("rewards {rewards:?}, T_app {times:?}, -sum {}", -total));
}

#[test]
fn criterion_03_telescoping() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let sc = generate_scenario(&ScenarioConfig { op_count: rng.gen_range(0.0..5.0), ..ScenarioConfig::desk().with_seed(i) })
            .unwrap();
        let app = &sc.applications[0];
        let w = WeightVector::from_time_weight(rng.gen_range(0.0..=1.0)).unwrap();
        let mut env = PlacementEnv::new(app, &sc.devices).unwrap();
        let initial = env.objective();
        let (mut sum_t, mut sum_c) = (0.0, 0.0);
        while !env.is_done() {
            let eligible = env.state().eligible_indices();
            let service = *eligible.choose(&mut rng).unwrap();
            let device = rng.gen_range(0..sc.devices.len());
            let out = env.step(Action { service, device }, w).unwrap();
            sum_t += out.reward.r_time;
            sum_c += out.reward.r_cost;
        }
        let fin = env.objective();
        worst = worst.max((sum_t - (initial.time - fin.time)).abs()).max((sum_c - (initial.cost - fin.cost)).abs());
    }
    report(3, "telescoping", worst <= 1e-9, &format!("1000 trajectories, worst deviation {worst:e}"));
}

fn small_scenario(seed: u64) -> (Application, DeviceSet, NormalizationBounds) {
    let sc = generate_scenario(&ScenarioConfig { device_count: 2, rows_per_app: 3, ..ScenarioConfig::default() }.with_seed(seed))
        .unwrap();
    let app = sc.applications.into_iter().next().unwrap();
    let norms = NormalizationBounds::analytic(&app, &sc.devices).unwrap();
    (app, sc.devices, norms)
}

#[test]
fn criterion_04_evolutionary_vs_oracle() {
    let results: Vec<(bool, bool)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let (app, devices, norms) = small_scenario(100 + seed);
            let w = WeightVector::BALANCED;
            let oracle = brute_force(&app, &devices, &[w], norms, DEFAULT_ENUMERATION_CAP).unwrap();
            let config = EvoConfig { population_size: 50, generations: 100, seed, ..EvoConfig::default() };
            let mut front = nsga2_solve(&app, &devices, norms, &config, &[]).unwrap().front_points();
            let mut exact = oracle.front_points();
            let key = |a: &ObjectivePoint, b: &ObjectivePoint| a.time.total_cmp(&b.time).then(a.cost.total_cmp(&b.cost));
            front.sort_by(key);
            exact.sort_by(key);
            let ga = ga_solve(&app, &devices, w, norms, &config, &[]).unwrap();
            (front == exact, (ga.value - oracle.weighted[0].value).abs() <= 1e-9)
        })
        .collect();
    let nsga = results.iter().filter(|r| r.0).count();
    let ga = results.iter().filter(|r| r.1).count();
    report(
        4,
        "evolutionary vs oracle",
        nsga >= 9 && ga >= 9,
        &format!("NSGA-II exact front {nsga}/10, GA weighted optimum {ga}/10"),
    );
}

#[test]
fn criterion_05_dominant_device() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    let trials = 5;
    let mut detail = String::new();
    for t in 0..trials {
        let sc = generate_scenario(&ScenarioConfig::desk().with_seed(500 + t)).unwrap();
        let app = &sc.applications[0];
        let mut devs = vec![dev(0, 50.0, 20.0)];
        for id in 1..=2 {
            devs.push(dev(id, [10.0, 20.0, 30.0, 40.0][rng.gen_range(0..4)], [10.0, 20.0, 30.0, 40.0][rng.gen_range(0..4)]));
        }
        // Strictly lowest latency and cost.
        devs.push(dev(3, 1.0, 1.0));
        let devices = DeviceSet::new(devs).unwrap();
        let norms = NormalizationBounds::analytic(app, &devices).unwrap();
        let oracle = brute_force(app, &devices, &[], norms, DEFAULT_ENUMERATION_CAP).unwrap();
        let edge = evaluate(app, &run_baseline(StrategyKind::GreedyEdge, app, &devices, 0), &devices).unwrap();
        let cost = evaluate(app, &run_baseline(StrategyKind::GreedyCost, app, &devices, 0), &devices).unwrap();
        let front = oracle.front_points();
        if front.len() == 1 && edge == front[0] && cost == front[0] {
            ok += 1;
        }
        detail = format!("last: greedy-edge {edge:?}, greedy-cost {cost:?}, oracle front {front:?}");
    }
    report(5, "dominant device", ok == trials, &format!("{ok}/{trials} scenarios exact; {detail}"));
}

#[test]
fn criterion_06_baseline_ordering() {
    let instances: Vec<Instance> =
        (0..20).map(|i| Instance::generate(&ScenarioConfig::desk(), 600 + i).unwrap()).collect();
    let w = WeightVector::BALANCED;
    let mean = |k| evaluate_baseline(k, &instances, w, 6).unwrap();
    let (greedy, cloud, random) = (mean(StrategyKind::GreedyEdge), mean(StrategyKind::AllInCloud), mean(StrategyKind::RandomDevices));
    report(
        6,
        "baseline ordering",
        greedy <= cloud && cloud <= random && greedy < random,
        &format!("greedy-edge {greedy:.4} <= all-in-cloud {cloud:.4} <= random {random:.4}"),
    );
}

#[test]
fn criterion_07_drl_learning_signal() {
    let rows: Vec<(u64, f64, f64, f64)> = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let config = TrainConfig { seed, ..TrainConfig::desk() };
            let data = Datasets::generate(&config).unwrap();
            let out = train(&config, &data, &mut ()).unwrap();
            let drl = evaluate_policy(&out.best, &data.test, config.weights).unwrap();
            let cloud = evaluate_baseline(StrategyKind::AllInCloud, &data.test, config.weights, seed).unwrap();
            let random = evaluate_baseline(StrategyKind::RandomDevices, &data.test, config.weights, seed).unwrap();
            (seed, drl, cloud, random)
        })
        .collect();
    let wins = rows.iter().filter(|(_, d, c, r)| d <= c && d < r).count();
    let detail: Vec<String> =
        rows.iter().map(|(s, d, c, r)| format!("seed {s}: drl {d:.4} cloud {c:.4} random {r:.4}")).collect();
    report(7, "DRL learning signal", wins >= 4, &format!("{wins}/5 seeds; {}", detail.join("; ")));
}

fn fogforge(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fogforge"))
        .args(args)
        .current_dir(dir)
        .env_remove("FOGFORGE_SEED")
        .output()
        .expect("spawn fogforge");
    assert!(out.status.success(), "fogforge {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn criterion_08_sweep_output() {
    let tmp = tempfile::tempdir().unwrap();
    fogforge(&["--seed", "8", "sweep", "--out", "sweep"], tmp.path());
    let rows = read_solutions(&tmp.path().join("sweep/solutions.csv")).unwrap();
    let mut weights: Vec<(f64, f64)> = rows.iter().map(|r| (r.w_time.unwrap(), r.w_cost.unwrap())).collect();
    weights.sort_by(|a, b| a.0.total_cmp(&b.0));
    let expected = vec![(0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0)];

    // Each point must be the objective of a legal placement: replay the
    // saved checkpoints on the reporting instance.
    let config = TrainConfig { seed: 8, ..TrainConfig::desk() };
    let data = Datasets::generate(&config).unwrap();
    let target = &data.validation[0];
    let mut valid = 0;
    for node in 0..5 {
        let (ckpt, model) = Checkpoint::load(&tmp.path().join(format!("sweep/checkpoints/node{node}.json"))).unwrap();
        let inf = infer_placement(&model, &target.app, &target.devices).unwrap();
        inf.placement.validate(&target.app, &target.devices).unwrap();
        let point = evaluate(&target.app, &inf.placement, &target.devices).unwrap();
        if rows.iter().any(|r| r.point() == point && r.w_time == Some(ckpt.weights.w_time)) {
            valid += 1;
        }
    }
    let points: Vec<ObjectivePoint> = rows.iter().map(|r| r.point()).collect();
    let front = nondominated_indices(&points);
    let flags_ok = rows.iter().enumerate().all(|(i, r)| r.dominated() != front.contains(&i));
    report(
        8,
        "sweep output",
        rows.len() == 5 && weights == expected && valid == 5 && flags_ok,
        &format!("{} rows, {valid} replayed, {} non-dominated", rows.len(), front.len()),
    );
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Central-difference check of `loss` with respect to a set of parameter
/// entries, perturbing the store in place.
fn check_params(
    store: &mut ParamStore,
    entries: &[(fogforge_core::nn::ParamId, usize)],
    loss: &dyn Fn(&mut Tape, &ParamStore) -> Var,
) -> f64 {
    let mut tape = Tape::new();
    let l = loss(&mut tape, store);
    let grads = tape.backward(l).unwrap();
    let mut acc = store.zero_grads();
    grads.accumulate_params(&tape, store, &mut acc);
    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let l = loss(&mut t, s);
        t.scalar(l)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &(id, e) in entries {
        let orig = store.get(id).data[e];
        store.get_mut(id).data[e] = orig + h;
        let plus = eval(store);
        store.get_mut(id).data[e] = orig - h;
        let minus = eval(store);
        store.get_mut(id).data[e] = orig;
        worst = worst.max(rel_err(acc.get(id).data[e], (plus - minus) / (2.0 * h)));
    }
    worst
}

/// Same check with respect to one input matrix.
fn check_input(x: &Matrix, entries: &[usize], loss: &dyn Fn(&mut Tape, Var) -> Var) -> f64 {
    let mut tape = Tape::new();
    let v = tape.input(x.clone());
    let l = loss(&mut tape, v);
    let g = tape.backward(l).unwrap().wrt(v).cloned().unwrap_or_else(|| Matrix::zeros(x.rows, x.cols));
    let eval = |m: Matrix| {
        let mut t = Tape::new();
        let v = t.input(m);
        let l = loss(&mut t, v);
        t.scalar(l)
    };
    let h = 1e-5;
    entries
        .iter()
        .map(|&e| {
            let mut p = x.clone();
            p.data[e] += h;
            let mut m = x.clone();
            m.data[e] -= h;
            rel_err(g.data[e], (eval(p) - eval(m)) / (2.0 * h))
        })
        .fold(0.0, f64::max)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Up to `k` (parameter, entry) pairs drawn across every trainable tensor.
fn sample_entries(store: &ParamStore, rng: &mut ChaCha8Rng, k: usize) -> Vec<(fogforge_core::nn::ParamId, usize)> {
    let all: Vec<_> = store
        .ids()
        .filter(|&id| store.is_trainable(id))
        .flat_map(|id| (0..store.get(id).data.len()).map(move |e| (id, e)))
        .collect();
    all.choose_multiple(rng, k).copied().collect()
}

/// Scalar probe `sum(y * r)` that weights every output entry differently.
fn probe(tape: &mut Tape, y: Var, r: &Matrix) -> Var {
    let r = tape.input(r.clone());
    let prod = tape.mul(y, r).unwrap();
    tape.sum(prod)
}

#[test]
fn criterion_09_gradient_integrity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cases = 50;
    let mut worst = [0.0f64; 5];

    for _ in 0..cases {
        // MLP layers.
        let (n, d) = (rng.gen_range(2..6), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let mlp = Mlp::new(MlpSpec::new(d, 6, 2, 3, Activation::Tanh), &mut store, "mlp", &mut rng).unwrap();
        let x = random_matrix(&mut rng, n, d);
        let r = random_matrix(&mut rng, n, 3);
        let entries = sample_entries(&store, &mut rng, 12);
        let f = |t: &mut Tape, s: &ParamStore| {
            let xv = t.input(x.clone());
            let y = mlp.forward(t, s, xv, NormMode::Batch).unwrap();
            probe(t, y, &r)
        };
        worst[0] = worst[0].max(check_params(&mut store, &entries, &f));
        let g = |t: &mut Tape, xv: Var| {
            let y = mlp.forward(t, &store, xv, NormMode::Batch).unwrap();
            probe(t, y, &r)
        };
        worst[0] = worst[0].max(check_input(&x, &(0..x.data.len()).collect::<Vec<_>>(), &g));

        // Batch normalization with batch statistics.
        let (n, w) = (rng.gen_range(2..8), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", w);
        for id in store.ids().collect::<Vec<_>>() {
            if store.is_trainable(id) {
                let m = store.get(id).clone();
                *store.get_mut(id) = random_matrix(&mut rng, m.rows, m.cols);
            }
        }
        let x = random_matrix(&mut rng, n, w);
        let r = random_matrix(&mut rng, n, w);
        let entries = sample_entries(&store, &mut rng, 2 * w);
        let f = |t: &mut Tape, s: &ParamStore| {
            let xv = t.input(x.clone());
            let y = bn.forward(t, s, xv, NormMode::Batch).unwrap().0;
            probe(t, y, &r)
        };
        worst[1] = worst[1].max(check_params(&mut store, &entries, &f));
        let g = |t: &mut Tape, xv: Var| {
            let y = bn.forward(t, &store, xv, NormMode::Batch).unwrap().0;
            probe(t, y, &r)
        };
        worst[1] = worst[1].max(check_input(&x, &(0..x.data.len()).collect::<Vec<_>>(), &g));

        // GIN aggregation including the learnable epsilon.
        let nodes = rng.gen_range(3..8);
        let neighbors = Arc::new(random_graph(&mut rng, nodes));
        let config = GinConfig { input_dim: 5, hidden_dim: 6, k_iterations: 2, mlp_layers: 2, ..GinConfig::default() };
        let mut store = ParamStore::new();
        let gin = Gin::new(config, &mut store, "gin", &mut rng).unwrap();
        for &e in &gin.eps {
            store.get_mut(e).data[0] = rng.gen_range(-0.5..0.5);
        }
        let x = random_matrix(&mut rng, nodes, 5);
        let rn = random_matrix(&mut rng, nodes, 6);
        let rp = random_matrix(&mut rng, 1, 6);
        let mut entries: Vec<_> = gin.eps.iter().map(|&e| (e, 0)).collect();
        entries.extend(sample_entries(&store, &mut rng, 12));
        let f = |t: &mut Tape, s: &ParamStore| {
            let xv = t.input(x.clone());
            let emb = gin.forward(t, s, xv, &neighbors, NormMode::Batch).unwrap();
            let a = probe(t, emb.nodes, &rn);
            let b = probe(t, emb.pooled, &rp);
            t.add(a, b).unwrap()
        };
        worst[2] = worst[2].max(check_params(&mut store, &entries, &f));

        // Masked softmax, log-probability and entropy.
        let m = rng.gen_range(2..10);
        let mut mask: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.7)).collect();
        let keep = rng.gen_range(0..m);
        mask[keep] = true;
        let logits = random_matrix(&mut rng, m, 1).map(|v| 3.0 * v);
        let coef = rng.gen_range(0.0..0.1);
        let g = |t: &mut Tape, xv: Var| {
            let logp = t.masked_log_softmax(xv, &mask).unwrap();
            let picked = t.pick(logp, keep).unwrap();
            let ent = t.entropy(logp);
            let scaled = t.scale(ent, coef);
            t.add(picked, scaled).unwrap()
        };
        worst[3] = worst[3].max(check_input(&logits, &(0..m).collect::<Vec<_>>(), &g));

        // PPO clipped surrogate through a log-softmax head, away from the
        // non-differentiable clip boundaries.
        let clip = 0.25;
        let (logits, old, adv, keep) = loop {
            let logits = random_matrix(&mut rng, 4, 1);
            let keep = rng.gen_range(0..4);
            let old = rng.gen_range(-2.5..-0.3);
            let mut t = Tape::new();
            let v = t.input(logits.clone());
            let lp = t.masked_log_softmax(v, &[true; 4]).unwrap();
            let ratio = (t.value(lp).data[keep] - old).exp();
            if ((ratio - (1.0 - clip)).abs() > 1e-3) && ((ratio - (1.0 + clip)).abs() > 1e-3) {
                break (logits, old, rng.gen_range(-2.0..2.0), keep);
            }
        };
        let g = |t: &mut Tape, xv: Var| {
            let lp = t.masked_log_softmax(xv, &[true; 4]).unwrap();
            let picked = t.pick(lp, keep).unwrap();
            clipped_surrogate(t, picked, old, adv, clip).unwrap()
        };
        worst[4] = worst[4].max(check_input(&logits, &[0, 1, 2, 3], &g));
    }
    let names = ["mlp", "batch-norm", "gin", "log-softmax", "ppo-surrogate"];
    let detail: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.2e}")).collect();
    report(
        9,
        "gradient integrity",
        worst.iter().all(|&w| w < 1e-4),
        &format!("{cases} cases each, worst relative error: {}", detail.join(", ")),
    );
}

/// Undirected neighbour lists of a random connected graph.
fn random_graph(rng: &mut ChaCha8Rng, nodes: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); nodes];
    let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for v in 1..nodes {
        let u = rng.gen_range(0..v);
        link(u, v, &mut adj);
    }
    for _ in 0..nodes {
        let (a, b) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
        link(a, b, &mut adj);
    }
    adj
}

#[test]
fn criterion_10_gin_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::new();
    let gin = Gin::new(GinConfig::default(), &mut store, "gin", &mut rng).unwrap();
    for &e in &gin.eps {
        store.get_mut(e).data[0] = 0.3;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..30);
        let adj = random_graph(&mut rng, n);
        let x = random_matrix(&mut rng, n, 5);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // Node v of the original graph becomes node perm[v].
        let mut padj = vec![Vec::new(); n];
        let mut px = Matrix::zeros(n, 5);
        for v in 0..n {
            padj[perm[v]] = adj[v].iter().map(|&u| perm[u]).collect();
            px.row_mut(perm[v]).copy_from_slice(x.row(v));
        }
        let pooled = |x: &Matrix, adj: Vec<Vec<usize>>| {
            let mut t = Tape::new();
            let xv = t.input(x.clone());
            let emb = gin.forward(&mut t, &store, xv, &Arc::new(adj), NormMode::Batch).unwrap();
            t.value(emb.pooled).data.clone()
        };
        let a = pooled(&x, adj);
        let b = pooled(&px, padj);
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    report(10, "GIN permutation invariance", worst <= 1e-9, &format!("100 graphs, worst |delta h_g| {worst:e}"));
}

#[test]
fn criterion_11_inference_latency() {
    let sc = generate_scenario(&ScenarioConfig::default().with_seed(11)).unwrap();
    let app = &sc.applications[0];
    let model = PolicyModel::new(PolicyConfig::for_services(app.len()), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (elapsed, inference) = pool.install(|| {
        let start = Instant::now();
        let inference = infer_placement(&model, app, &sc.devices).unwrap();
        (start.elapsed().as_secs_f64(), inference)
    });
    inference.placement.validate(app, &sc.devices).unwrap();
    report(
        11,
        "inference latency",
        elapsed < 1.0,
        &format!("{} devices, {} services in {:.3} s", sc.devices.len(), app.len(), elapsed),
    );
}

#[test]
fn criterion_12_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fogforge(&["--seed", "12", "generate", "--devices", "2", "--rows", "3", "--out", "s.json"], dir);
    let scenario = std::fs::read(dir.join("s.json")).unwrap();
    fogforge(&["--seed", "12", "generate", "--devices", "2", "--rows", "3", "--out", "s2.json"], dir);
    let mut identical = vec![("generate", scenario == std::fs::read(dir.join("s2.json")).unwrap())];

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("train", vec!["train", "--episodes", "4", "--envs", "3", "--test-size", "3"]),
        ("sweep", vec!["sweep", "--episodes", "2", "--envs", "2", "--test-size", "2"]),
        ("baseline", vec!["baseline", "--scenario", "s.json"]),
        ("evo ga", vec!["evo", "ga", "--scenario", "s.json", "--population", "20", "--generations", "20"]),
        ("evo nsga2", vec!["evo", "nsga2", "--scenario", "s.json", "--population", "20", "--generations", "20"]),
        ("oracle", vec!["oracle", "--scenario", "s.json"]),
    ];
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = format!("{}-{run}", name.replace(' ', "-"));
            let mut full = vec!["--seed", "12", "--threads", "1"];
            full.extend(args);
            full.extend(["--out", &out]);
            fogforge(&full, dir);
            outputs.push(std::fs::read(dir.join(&out).join("solutions.csv")).unwrap());
        }
        identical.push((name, outputs[0] == outputs[1] && !outputs[0].is_empty()));
    }
    for run in ["a", "b"] {
        let out = format!("infer-{run}");
        fogforge(
            &["--seed", "12", "--threads", "1", "infer", "--checkpoint", "train-a/checkpoints/best.json", "--scenario", "s.json", "--out", &out],
            dir,
        );
        fogforge(&["--threads", "1", "compare", "oracle-a", "evo-nsga2-a", "baseline-a", "--out", &format!("compare-{run}")], dir);
    }
    let same = |a: &str, b: &str| std::fs::read(dir.join(a)).unwrap() == std::fs::read(dir.join(b)).unwrap();
    identical.push(("infer", same("infer-a/solutions.csv", "infer-b/solutions.csv")));
    identical.push(("compare", same("compare-a/solutions.csv", "compare-b/solutions.csv")));
    let failed: Vec<&str> = identical.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    report(
        12,
        "determinism",
        failed.is_empty(),
        &format!("{} commands re-run, mismatches: {failed:?}", identical.len()),
    );
}
