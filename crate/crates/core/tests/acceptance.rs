//! Acceptance suite. Runs every criterion in sequence so the timing
//! criterion is not disturbed by concurrent tests, prints one line per
//! criterion and fails the target if any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use num_rational::Rational64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use broker_assign::bandit::{cumulative_regret, BanditModel, BanditParams, CovarianceState, RegretBound, RewardNet};
use broker_assign::cbs::prune_brokers;
use broker_assign::domain::{assert_capacity_feasible, BrokerId, RequestId, TrialTriple};
use broker_assign::engine::{assign_interval, DayLedger};
use broker_assign::matching::{solve_max_weight_matching, solve_rectangular};
use broker_assign::simgen::{self, generate_world};
use broker_assign::{EngineConfig, Policy, RationalGraph, RunOptions, WorldConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("km exactness", km_exactness),
        ("cbs losslessness", cbs_losslessness),
        ("pruned run equals full run", end_to_end_equivalence),
        ("pruning speedup", pruning_speedup),
        ("gradient correctness", gradient_correctness),
        ("covariance maintenance", covariance_maintenance),
        ("bandit learning", bandit_learning),
        ("personalization freeze", personalization_freeze),
        ("policy ordering", policy_ordering),
        ("worked example", worked_example),
        ("ground-truth calibration", calibration),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {name}: {verdict} ({}; {:.1} s)", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

fn dyadic(rng: &mut ChaCha8Rng) -> Rational64 {
    Rational64::new(rng.random_range(-64..=256), 1 << rng.random_range(0..6))
}

fn best_by_permutation(w: &[Vec<Rational64>]) -> Rational64 {
    fn go(w: &[Vec<Rational64>], row: usize, used: &mut Vec<bool>, acc: Rational64, best: &mut Rational64) {
        if row == w.len() {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        for j in 0..w.len() {
            if !used[j] {
                used[j] = true;
                go(w, row + 1, used, acc + w[row][j], best);
                used[j] = false;
            }
        }
    }
    let n = w.len();
    let mut best = Rational64::from_integer(i64::MIN / 4);
    go(w, 0, &mut vec![false; n], Rational64::from_integer(0), &mut best);
    best
}

fn km_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let w: Vec<Vec<Rational64>> = (0..n).map(|_| (0..n).map(|_| dyadic(&mut rng)).collect()).collect();
        let m = solve_max_weight_matching(&RationalGraph::from_rows(&w).unwrap()).unwrap();
        let recomputed = m.pairs.iter().fold(Rational64::from_integer(0), |acc, &(i, j)| acc + w[i][j]);
        if m.total != best_by_permutation(&w) || recomputed != m.total || m.pairs.len() != n {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(mismatches == 0 && secs < 10.0, format!("{mismatches}/500 mismatches in {secs:.2} s"))
}

fn km_total(rows: &[Vec<Rational64>]) -> Rational64 {
    solve_max_weight_matching(&RationalGraph::from_rows(rows).unwrap().balance()).unwrap().total
}

fn cbs_losslessness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    let mut max_kept = 0;
    for inst in 0..500u64 {
        let nr = rng.random_range(1..=6);
        let nb = rng.random_range(1..=30);
        // coarse weights force plenty of ties
        let w: Vec<Vec<Rational64>> =
            (0..nr).map(|_| (0..nb).map(|_| Rational64::new(rng.random_range(0..8), 4)).collect()).collect();
        let requests: Vec<RequestId> = (0..nr as u32).map(RequestId).collect();
        let brokers: Vec<BrokerId> = (0..nb as u32).map(BrokerId).collect();
        let kept = prune_brokers(&requests, &brokers, |r, b| Some(w[r.0 as usize][b.0 as usize]), inst);
        max_kept = max_kept.max(kept.len());
        let pruned: Vec<Vec<Rational64>> =
            w.iter().map(|row| kept.iter().map(|b| row[b.0 as usize]).collect()).collect();
        if km_total(&w) != km_total(&pruned) || kept.len() > nr * nr {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(mismatches == 0 && secs < 10.0, format!("{mismatches}/500 mismatches, at most {max_kept} brokers kept, {secs:.2} s"))
}

fn scaled_world(seed: u64) -> WorldConfig {
    WorldConfig { n_brokers: 200, n_requests: 5000, n_days: 14, rng_seed: seed, ..WorldConfig::default() }
}

fn end_to_end_equivalence() -> Outcome {
    let start = Instant::now();
    let mut differing = 0;
    for seed in 0..10 {
        let w = generate_world(&scaled_world(seed)).unwrap();
        let cfg = EngineConfig { rng_seed: seed, ..EngineConfig::default() };
        let full = broker_assign::engine::run_policy(Policy::Lacb, &w, &cfg, RunOptions::default()).unwrap();
        let pruned = broker_assign::engine::run_policy(Policy::LacbOpt, &w, &cfg, RunOptions::default()).unwrap();
        let same = full.total_utility().to_bits() == pruned.total_utility().to_bits()
            && full.realized_utility().to_bits() == pruned.realized_utility().to_bits()
            && full.ledger == pruned.ledger;
        if !same {
            differing += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(differing == 0 && secs < 300.0, format!("{differing}/10 worlds differ, {secs:.1} s"))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pruning_speedup() -> Outcome {
    let wc = WorldConfig { n_brokers: 2000, n_requests: 400, n_days: 1, sigma: 0.01, ..WorldConfig::default() };
    let w = generate_world(&wc).unwrap();
    let cfg = EngineConfig { warmup_days: 2, pretrain_epochs: 5, ..EngineConfig::default() };
    let opts = RunOptions { timing: true };
    let full = broker_assign::engine::run_policy(Policy::Lacb, &w, &cfg, opts).unwrap();
    let pruned = broker_assign::engine::run_policy(Policy::LacbOpt, &w, &cfg, opts).unwrap();
    let batches = full.assign_ms.len();
    let (mut a, mut b) = (full.assign_ms.clone(), pruned.assign_ms.clone());
    let (ma, mb) = (median(&mut a), median(&mut b));
    let speedup = ma / mb;
    let same = full.total_utility().to_bits() == pruned.total_utility().to_bits();
    outcome(
        batches == 20 && speedup >= 5.0 && same,
        format!("{batches} batches of {}, median {ma:.2} ms vs {mb:.2} ms, speedup {speedup:.1}x", wc.batch_size()),
    )
}

fn random_net(rng: &mut ChaCha8Rng, input: usize) -> RewardNet<f64> {
    RewardNet::new(input, &[16, 8], rng)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let dim = 5;
    let h = 1e-4;
    let params = BanditParams { alpha: 0.001, lambda: 0.001, learning_rate: 0.01, batch_size: 16, candidates: vec![10, 20, 30, 40, 50, 60] };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..20 {
        let net = random_net(&mut rng, dim + 1);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = rng.random_range(0.0..1.0);
        let g = net.gradient(&x, c).unwrap();
        let theta = net.params();
        let mut probe = net.clone();
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] = theta[k] + h;
            probe.set_params(&t).unwrap();
            let up = probe.forward(&x, c).unwrap();
            t[k] = theta[k] - h;
            probe.set_params(&t).unwrap();
            let down = probe.forward(&x, c).unwrap();
            worst = worst.max(rel_err(g[k], (up - down) / (2.0 * h)));
            checked += 1;
        }

        let model = BanditModel::from_net(net, params.clone()).unwrap();
        let batch: Vec<TrialTriple<f64>> = (0..6)
            .map(|_| {
                let ctx = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                TrialTriple::new(ctx, rng.random_range(0..=60), rng.random_range(0.0..0.3))
            })
            .collect();
        let (_, lg) = model.loss_and_gradient(&batch).unwrap();
        let mut probe = model.net().clone();
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] = theta[k] + h;
            probe.set_params(&t).unwrap();
            let up = BanditModel::from_net(probe.clone(), params.clone()).unwrap().loss(&batch).unwrap();
            t[k] = theta[k] - h;
            probe.set_params(&t).unwrap();
            let down = BanditModel::from_net(probe.clone(), params.clone()).unwrap().loss(&batch).unwrap();
            worst = worst.max(rel_err(lg[k], (up - down) / (2.0 * h)));
            checked += 1;
        }
    }
    outcome(worst <= 1e-5, format!("{checked} coordinates, worst relative error {worst:.2e}"))
}

fn covariance_maintenance() -> Outcome {
    let d = 12;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let lambda = 1.0;
        let mut cov = CovarianceState::<f64>::new(d, lambda);
        let mut direct = DMatrix::<f64>::identity(d, d) * lambda;
        for _ in 0..50 {
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            cov.update(&g).unwrap();
            let gv = DMatrix::from_column_slice(d, 1, &g);
            direct += &gv * gv.transpose();
        }
        let inv = direct.try_inverse().expect("positive definite");
        let ours = cov.inverse();
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((ours[i * d + j] - inv[(i, j)]).abs());
            }
        }
    }
    outcome(worst <= 1e-8, format!("max abs deviation {worst:.2e} over 100 seeds"))
}

const ARMS: [u32; 4] = [10, 20, 30, 40];

/// Mean reward per arm of a realizable environment: a fixed net of the
/// learner's architecture.
fn arm_values(teacher: &BanditModel<f64>, x: &[f64]) -> Vec<f64> {
    ARMS.iter().map(|&c| teacher.predict(x, c).unwrap()).collect()
}

fn bandit_learning() -> Outcome {
    let dim = 4;
    let batches = 512;
    let per_batch = 16;
    let params = BanditParams { alpha: 0.001, lambda: 0.001, learning_rate: 0.01, batch_size: per_batch, candidates: ARMS.to_vec() };
    let mut ucb_regret = Vec::new();
    let mut random_regret = Vec::new();
    let mut violations = 0;
    let mut slack = f64::INFINITY;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let teacher = BanditModel::new(dim, &[16, 8], params.clone(), &mut rng).unwrap();
        let mut learner = BanditModel::new(dim, &[16, 8], params.clone(), &mut rng).unwrap();
        let mut trials = Vec::new();
        let mut random_trials = Vec::new();
        for _ in 0..batches {
            for _ in 0..per_batch {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let values = arm_values(&teacher, &x);
                let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let c = learner.choose(&x).unwrap();
                let got = values[ARMS.iter().position(|&a| a == c).unwrap()];
                learner.observe(TrialTriple::new(x, c, got)).unwrap();
                trials.push((best, got));
                random_trials.push((best, values[rng.random_range(0..ARMS.len())]));
            }
            let regret = cumulative_regret(&trials, |&best| best);
            let done = trials.len() / per_batch;
            let bound = RegretBound::for_net(learner.net(), done, ARMS.len());
            if !bound.holds(regret) {
                violations += 1;
            }
            slack = slack.min(bound.value() - regret);
        }
        ucb_regret.push(cumulative_regret(&trials, |&best| best));
        random_regret.push(cumulative_regret(&random_trials, |&best| best));
    }
    let ucb = ucb_regret.iter().sum::<f64>() / 10.0;
    let random = random_regret.iter().sum::<f64>() / 10.0;
    let reduction = 1.0 - ucb / random;
    outcome(
        reduction >= 0.3 && violations == 0,
        format!("mean regret {ucb:.2} vs random {random:.2} ({:.0}% lower), {violations} bound violations, min slack {slack:.2}", 100.0 * reduction),
    )
}

fn frozen_digest(m: &BanditModel<f64>) -> Vec<u8> {
    Sha256::digest(m.layer_bytes(0..m.net().depth() - 1)).to_vec()
}

struct PersonalizationRun {
    frozen: bool,
    pooled: u32,
    tuned: u32,
    /// Argmax under the least-squares last layer on the frozen features.
    best_last_layer: u32,
    oracle: u32,
}

fn argmax_arm(arms: &[u32], score: impl Fn(u32) -> f64) -> u32 {
    let mut best = (arms[0], f64::NEG_INFINITY);
    for &c in arms {
        let s = score(c);
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

/// One seeded run on a generated world: the pooled model learns from every
/// broker but the first, which is then fine-tuned on a few trials of its
/// own. Rewards are the expected outcome plus small noise.
fn personalization_run(seed: u64) -> PersonalizationRun {
    let w = generate_world(&WorldConfig { n_brokers: 31, rng_seed: 800 + seed, ..WorldConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
    let cfg = EngineConfig::default();
    let arms = cfg.candidate_capacities.clone();
    let max_c = cfg.max_capacity();
    let demand = max_c;
    let target = BrokerId(0);
    let trial = |rng: &mut ChaCha8Rng, b: BrokerId, c: u32| {
        let r = simgen::expected_reward(&w.truth, b, c, demand, max_c) + 0.01 * (rng.random::<f64>() - 0.5);
        TrialTriple::new(w.brokers[b.0 as usize].features.clone(), c, r)
    };
    let mut pooled = Vec::new();
    for b in &w.brokers[1..] {
        for _ in 0..24 {
            let c = arms[rng.random_range(0..arms.len())];
            pooled.push(trial(&mut rng, b.id, c));
        }
    }
    let own: Vec<_> = (0..3).flat_map(|_| arms.clone()).map(|c| trial(&mut rng, target, c)).collect();

    let mut base = BanditModel::new(w.config.feature_dim, &cfg.layer_sizes, BanditParams::from_config(&cfg), &mut rng).unwrap();
    for _ in 0..200 {
        pooled.shuffle(&mut rng);
        for chunk in pooled.chunks(cfg.batch_size) {
            base.train_step(chunk).unwrap();
        }
    }
    let ctx = w.brokers[0].features.clone();
    let greedy = |m: &BanditModel<f64>| argmax_arm(&arms, |c| m.predict(&ctx, c).unwrap());

    let hidden = |c: u32, x: &[f64]| base.net().last_layer_input(x, base.scale_capacity(c)).unwrap();
    let rows: Vec<Vec<f64>> = own.iter().map(|t| hidden(t.workload, &t.context)).collect();
    let k = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let y = DMatrix::from_fn(rows.len(), 1, |i, _| own[i].reward);
    let ridge = (x.transpose() * &x + DMatrix::identity(k, k) * cfg.lambda).try_inverse().unwrap() * x.transpose() * y;
    let best_last_layer = argmax_arm(&arms, |c| hidden(c, &ctx).iter().zip(ridge.iter()).map(|(h, v)| h * v).sum());

    let before = frozen_digest(&base);
    let mut tuned = base.personalize(&own, cfg.finetune_steps).unwrap();
    let tuned_arm = greedy(&tuned);
    for _ in 0..10 {
        tuned.train_step(&own).unwrap();
    }
    let frozen = frozen_digest(&tuned) == before && frozen_digest(&base) == before;
    let (oracle, _) = simgen::oracle_best_capacity(&w.truth, target, demand, &arms);
    PersonalizationRun { frozen, pooled: greedy(&base), tuned: tuned_arm, best_last_layer, oracle }
}

fn personalization_freeze() -> Outcome {
    let (mut runs, mut hits, mut toward, mut reachable) = (0, 0, 0, 0);
    let mut frozen_ok = true;
    let mut seed = 0;
    while runs < 50 && seed < 2000 {
        let r = personalization_run(seed);
        seed += 1;
        frozen_ok &= r.frozen;
        if r.pooled == r.oracle {
            continue;
        }
        runs += 1;
        hits += (r.tuned == r.oracle) as u32;
        toward += (r.tuned.abs_diff(r.oracle) < r.pooled.abs_diff(r.oracle)) as u32;
        reachable += (r.best_last_layer == r.oracle) as u32;
    }
    let rate = hits as f64 / runs as f64;
    outcome(
        frozen_ok && runs == 50 && rate >= 0.8,
        format!(
            "frozen layers {}, oracle arm matched in {hits}/{runs} runs, moved toward it in {toward}, best possible last layer matches in {reachable}",
            if frozen_ok { "identical" } else { "changed" }
        ),
    )
}

/// Daily demand of a quarter of the brokers' mean total knee capacity.
fn overload_world(seed: u64) -> WorldConfig {
    WorldConfig { n_requests: 21_000, sigma: 0.015, ..scaled_world(seed) }
}

fn policy_ordering() -> Outcome {
    let policies = [
        Policy::TopK(1),
        Policy::TopK(3),
        Policy::CTopK { k: 3, fixed_capacity: EngineConfig::default().fixed_capacity },
        Policy::KmBatch,
        Policy::An,
        Policy::Lacb,
    ];
    let mut totals = vec![0.0; policies.len()];
    let mut infeasible = 0;
    let worlds = 10;
    for seed in 0..worlds {
        let w = generate_world(&overload_world(1000 + seed)).unwrap();
        let cfg = EngineConfig { rng_seed: seed, ..EngineConfig::default() };
        for (i, &p) in policies.iter().enumerate() {
            let rep = broker_assign::engine::run_policy(p, &w, &cfg, RunOptions::default()).unwrap();
            totals[i] += rep.realized_utility() / worlds as f64;
            if p.is_capacity_aware() {
                for day in 0..w.config.n_days {
                    if !assert_capacity_feasible(&rep.result.for_day(day), &rep.capacities(day)) {
                        infeasible += 1;
                    }
                }
            }
        }
    }
    let [top1, top3, ctop3, km, an, lacb] = totals[..] else { unreachable!() };
    let ordered = lacb >= an && lacb >= ctop3 && ctop3 >= top3 && top3 >= top1 && lacb >= 1.1 * top3;
    outcome(
        ordered && infeasible == 0,
        format!(
            "means lacb {lacb:.1}, an {an:.1}, km {km:.1}, ctopk3 {ctop3:.1}, topk3 {top3:.1}, topk1 {top1:.1}; lacb/topk3 {:.3}; {infeasible} infeasible days",
            lacb / top3
        ),
    )
}

fn worked_example() -> Outcome {
    let refined = [[0.25, 0.45], [0.40, 0.50]];
    let mut ledger = DayLedger::new(0, vec![Some(4), Some(2)]);
    let (mut pairs, total) = assign_interval(
        &[RequestId(0), RequestId(1)],
        &[BrokerId(0), BrokerId(1)],
        |r, b| Some(refined[b.0 as usize][r.0 as usize]),
        &mut ledger,
    )
    .unwrap();
    pairs.sort();
    let expected = vec![(RequestId(0), BrokerId(1)), (RequestId(1), BrokerId(0))];
    let residues = (ledger.residue(BrokerId(0)), ledger.residue(BrokerId(1)));
    // same matrix in exact arithmetic, requests as rows
    let exact: Vec<Vec<Rational64>> =
        vec![vec![Rational64::new(1, 4), Rational64::new(2, 5)], vec![Rational64::new(9, 20), Rational64::new(1, 2)]];
    let m = solve_rectangular(&RationalGraph::from_rows(&exact).unwrap());
    let exact_pairs: Vec<(usize, usize)> = m.pairs.clone();
    let pass = pairs == expected
        && exact_pairs == vec![(0, 1), (1, 0)]
        && m.total == Rational64::new(17, 20)
        && (total - 0.85).abs() <= f64::EPSILON
        && residues == (Some(3), Some(1));
    outcome(
        pass,
        format!("pairs {{(b1,r2),(b2,r1)}} {}, exact total {}, f64 total {total}, residues {:?}", pairs == expected, m.total, residues),
    )
}

fn calibration() -> Outcome {
    let w = generate_world(&WorldConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let mut mean = |lo: u32, hi: u32| {
        let draws = 10_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let b = BrokerId(rng.random_range(0..w.brokers.len() as u32));
            total += simgen::sample_signup_rate(&w.truth, b, rng.random_range(lo..=hi), &mut rng);
        }
        total / draws as f64
    };
    let light = mean(0, 40);
    let heavy = mean(41, 60);
    outcome(
        (0.143..=0.275).contains(&light) && (0.025..=0.178).contains(&heavy),
        format!("mean rate {light:.3} at workloads <= 40, {heavy:.3} above"),
    )
}
