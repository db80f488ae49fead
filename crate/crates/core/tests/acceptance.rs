//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails. Thresholds below are fixed.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use budsel::bandit::{bandit_select, excess_gaps_from_penalized, regret, BanditConfig};
use budsel::datagen::{DataSource, Phase, StreamId};
use budsel::grid::{argmin_smallest, build_coarse_grid_from_slice, verify_grid_condition};
use budsel::harness::{Experiment, ExperimentConfig, TrialRecord};
use budsel::learners::{erm_oracle, Learner, OracleOptions};
use budsel::nested::doubling_schedule;
use budsel::penalties::{penbar, PenaltySpec};
use budsel::risk::mean_loss;
use budsel::{BudgetSchedule, ConcentrationConstants, LossKind, ModelClassSpec, Structure};

use common::{regression_data, sgd, sign_data, vc_dims};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- 1

/// Largest-index grid by direct search: for each threshold, scan every class.
fn grid_by_search(p: &[f64], lambda: f64, s: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for k in 0..s {
        let thr = p[0] * (1.0 + lambda).powi(k as i32);
        let j = (0..p.len()).filter(|&j| p[j] <= thr).max().unwrap() + 1;
        if out.last() != Some(&j) {
            out.push(j);
        }
    }
    out
}

fn criterion_1() -> Verdict {
    let mut r = rng(1);
    let mut cases = 0;
    let mut failures = Vec::new();
    for case in 0..1000 {
        let len = r.gen_range(1..=60);
        let mut p = vec![r.gen_range(1e-3..2.0)];
        for _ in 1..len {
            let last = *p.last().unwrap();
            // mix of tiny and large steps so thresholds land everywhere
            let step = if r.gen_bool(0.3) {
                last * r.gen_range(1e-6..1e-2)
            } else {
                last * r.gen_range(0.01..1.5)
            };
            p.push(last + step);
        }
        for lambda in [0.5, 1.0, 2.0] {
            let s = r.gen_range(1..=12);
            cases += 1;
            let g = build_coarse_grid_from_slice(&p, lambda, s).unwrap();
            let ok = verify_grid_condition(&g, &p, lambda).satisfied
                && g.indices == grid_by_search(&p, lambda, s)
                && g.k_lambda == *g.indices.last().unwrap();
            if !ok && failures.len() < 3 {
                failures.push(format!("case {case} lambda {lambda}"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("{cases} grids satisfy the covering condition{}", fails(&failures)),
    )
}

fn fails(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; failures: {}", f.join(", "))
    }
}

// ---------------------------------------------------------------- 2, 3

struct RandomHierarchy {
    classes: Vec<ModelClassSpec>,
    budget: f64,
    consts: ConcentrationConstants,
}

fn random_hierarchy(r: &mut ChaCha8Rng, len: usize) -> RandomHierarchy {
    let mut dims = Vec::with_capacity(len);
    let mut d = r.gen_range(1..4);
    for _ in 0..len {
        dims.push(d);
        d += r.gen_range(1..4);
    }
    let classes = vc_dims(&dims, 1.0, r.gen_range(0.5..4.0));
    RandomHierarchy {
        classes,
        budget: 10f64.powf(r.gen_range(2.0..6.0)),
        consts: ConcentrationConstants {
            c1: 1.0,
            c2: r.gen_range(0.1..2.0),
            m: r.gen_range(0.5..5.0),
            bound: r.gen_range(0.1..3.0),
        },
    }
}

/// Composite penalties at `T / s`; classes without samples there are +inf.
fn penbars(h: &RandomHierarchy, s: usize) -> Vec<f64> {
    let schedule = BudgetSchedule::from_classes(&h.classes, h.budget).unwrap();
    h.classes
        .iter()
        .map(|c| penbar(&c.penalty, &schedule, c.index, h.budget, s, &h.consts).unwrap_or(f64::INFINITY))
        .collect()
}

/// Nonincreasing risks with `R_1 <= B` and `R >= 0`.
fn random_risks(r: &mut ChaCha8Rng, len: usize, bound: f64) -> Vec<f64> {
    let mut risks = vec![r.gen_range(0.0..=bound)];
    for _ in 1..len {
        let last = *risks.last().unwrap();
        let drop = if r.gen_bool(0.5) { 0.0 } else { last * r.gen_range(0.0..0.3) };
        risks.push((last - drop).max(0.0));
    }
    risks
}

fn criterion_2() -> Verdict {
    let mut r = rng(2);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let len = r.gen_range(2..=50);
        let h = random_hierarchy(&mut r, len);
        let p = penbars(&h, 1);
        let p: Vec<f64> = p.into_iter().take_while(|v| v.is_finite()).collect();
        let risks = random_risks(&mut r, p.len(), h.consts.bound);
        let hi = r.gen_range(0.1..5.0);
        let lo = hi * r.gen_range(0.0..1.0);
        let argmin = |c: f64| {
            let v: Vec<f64> = risks.iter().zip(&p).map(|(a, b)| a + c * b).collect();
            argmin_smallest(&v, 0.0).unwrap()
        };
        if argmin(hi) > argmin(lo) && failures.len() < 3 {
            failures.push(format!("case {case}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!("1000 hierarchies: larger multiplier never picks a larger class{}", fails(&failures)),
    )
}

/// Smallest `s` with `s >= ceil(log(1 + B / penbar_1(T, s)) / log(1 + lambda)) + 2`.
fn admissible_grid_size(h: &RandomHierarchy, lambda: f64) -> Option<usize> {
    (3..100_000)
        .find(|&s| {
            let p1 = penbars(h, s)[0];
            let need = ((1.0 + h.consts.bound / p1).ln() / (1.0 + lambda).ln()).ceil() as usize + 2;
            p1.is_finite() && s >= need
        })
}

fn criterion_3() -> Verdict {
    let mut r = rng(3);
    let mut failures = Vec::new();
    let mut truncated = 0;
    let mut cases = 0;
    while cases < 200 {
        let h = random_hierarchy(&mut r, 200);
        let lambda = [0.5, 1.0, 2.0][r.gen_range(0..3)];
        let Some(s) = admissible_grid_size(&h, lambda) else {
            continue;
        };
        let p = penbars(&h, s);
        cases += 1;
        let grid = build_coarse_grid_from_slice(&p, lambda, s).unwrap();
        let risks = random_risks(&mut r, p.len(), h.consts.bound);
        let scores: Vec<f64> = risks.iter().zip(&p).map(|(a, b)| a + 2.0 * b).collect();
        let best = argmin_smallest(&scores, 0.0).unwrap() + 1;
        if grid.k_lambda < 200 {
            truncated += 1;
        }
        if best > grid.k_lambda && failures.len() < 3 {
            failures.push(format!("case {cases}: argmin {best} > k {}", grid.k_lambda));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "200 hierarchies of 200 classes ({truncated} truncated below 200): argmin within the grid{}",
            fails(&failures)
        ),
    )
}

// ---------------------------------------------------------------- 4, 5

const SLOW_RATE_CONFIG: &str = r#"
[hierarchy]
family = "dims"
dims = [1, 2, 4, 8, 16, 32]
radius = 4.0
penalty = "vc"
rate = "per_dimension"
samples_per_quantum = 1.0

[generator]
kind = "nested_dims"
ambient_dim = 32
true_support = 4
weight_norm = 2.0
label_noise = 0.1
xbound = 5.656854249492381
seed = 11

[selector]
kind = "nested"
loss = "logistic"
lambda = 1.0

[budget]
total = 100000.0
trials = 200
mc_samples = 100000
oracle_samples = 100000
oracle_mc = 1000000

[constants]
c1 = 1.0
c2 = 1.0
m = 3.0
"#;

fn criterion_4_5() -> (Verdict, Verdict) {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_toml_str(SLOW_RATE_CONFIG).unwrap();
    let exp = Experiment::new(cfg.clone()).unwrap();
    let refs = exp.references.clone();
    let records = exp.run().unwrap();
    let violations = records.iter().filter(|r| r.violated).count();
    let rate = violations as f64 / records.len() as f64;
    let mut chosen = [0usize; 7];
    for r in &records {
        chosen[r.chosen_index] += 1;
    }
    let margin = records
        .iter()
        .map(|r| r.bound_rhs - r.risk)
        .fold(f64::INFINITY, f64::min);
    let took = secs(start.elapsed());
    let v4 = verdict(
        rate <= 0.10 && took <= 600.0,
        format!(
            "violation rate {rate:.3} (limit 0.10) over {} trials, smallest slack {margin:.4}, chosen counts by class {:?}, {:.1}s",
            records.len(),
            &chosen[1..],
            took
        ),
    );

    let start = Instant::now();
    let mut sweep = cfg;
    sweep.budget.trials = 50;
    sweep.budget.sweep = Some("1024:7".parse().unwrap());
    let exp = Experiment::with_references(sweep, refs).unwrap();
    let records = exp.run().unwrap();
    let medians: Vec<f64> = budsel::harness::summarize(&records)
        .iter()
        .map(|s| s.median_excess_risk)
        .collect();
    let inversions = medians.windows(2).filter(|w| w[1] > w[0]).count();
    let took = secs(start.elapsed());
    let v5 = verdict(
        inversions <= 1 && took <= 900.0,
        format!(
            "median excess risk over T = 2^10..2^16: {} ({inversions} inversions, limit 1), {:.1}s",
            fmt_list(&medians, 4),
            took
        ),
    );
    (v4, v5)
}

fn fmt_list(v: &[f64], prec: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.prec$}")).collect();
    format!("[{}]", items.join(", "))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Verdict {
    let mut r = rng(6);
    let mut failures = Vec::new();
    for _ in 0..100 {
        let t0: f64 = r.gen_range(1.0..=1e4);
        let rounds = doubling_schedule(t0).unwrap();
        let spent: f64 = rounds.iter().sum();
        let last = *rounds.last().unwrap();
        if !(spent <= t0 && last >= t0 / 4.0) && failures.len() < 3 {
            failures.push(format!("T0 = {t0}: spent {spent}, last {last}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!("100 random T0 in [1, 1e4]: spend <= T0 and last round >= T0/4{}", fails(&failures)),
    )
}

// ---------------------------------------------------------------- 7, 8

const GAPS: [f64; 5] = [0.0, 0.15, 0.2, 0.3, 0.4];

/// Five 2-dimensional classes that differ only by a constant loss offset,
/// so the excess penalized risks are exactly the offsets.
fn gap_classes(quantum: f64) -> Vec<ModelClassSpec> {
    GAPS.iter()
        .enumerate()
        .map(|(p, &g)| {
            ModelClassSpec::new(
                p + 1,
                Structure::ActiveDims { dims: 2, radius: 2.0 },
                quantum,
                PenaltySpec::Vc { dims: 2 },
            )
            .with_loss_offset(g)
        })
        .collect()
}

fn criterion_7_8() -> (Verdict, Verdict) {
    let start = Instant::now();
    let classes = gap_classes(3.0);
    let spec = regression_data(2, 2, 1.0, 0.5, 5);
    let learner = sgd(LossKind::Squared, &spec);
    let gaps = excess_gaps_from_penalized(&GAPS).unwrap();
    let trials = 20u64;
    let budgets: Vec<u64> = (9..=13).map(|e| 1u64 << e).collect();

    let mut ratios = vec![Vec::new(); GAPS.len()];
    let mut normalized = Vec::new();
    let mut identified_last = 0;
    for &t in &budgets {
        let runs: Vec<_> = (0..trials)
            .map(|trial| {
                let cfg = BanditConfig {
                    trial,
                    ..BanditConfig::default()
                };
                bandit_select(&classes, &learner, &spec, t, &cfg).unwrap()
            })
            .collect();
        let log_t = (t as f64).ln();
        for (i, ratio) in ratios.iter_mut().enumerate() {
            let mean = runs.iter().map(|o| o.trace.counts[i] as f64).sum::<f64>() / trials as f64;
            ratio.push(mean / log_t);
        }
        let mean_regret =
            runs.iter().map(|o| regret(&o.trace, &gaps).unwrap()).sum::<f64>() / trials as f64;
        normalized.push(mean_regret / (GAPS.len() as f64 * t as f64 * log_t).sqrt());
        if t == *budgets.last().unwrap() {
            identified_last = runs
                .iter()
                .filter(|o| o.trace.most_frequent == gaps.optimal_index)
                .count();
        }
    }
    let elapsed = secs(start.elapsed());

    let spread = |v: &[f64]| {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    };
    let spreads: Vec<f64> = (1..GAPS.len()).map(|i| spread(&ratios[i])).collect();
    let worst = spreads.iter().copied().fold(0.0, f64::max);
    let identified = identified_last as f64 / trials as f64;
    let v7 = verdict(
        worst <= 3.0 && identified >= 0.95 && elapsed <= 1200.0,
        format!(
            "max/min of T_i/log T per suboptimal class {} (limit 3), best class identified in {:.0}% at T = 8192 (limit 95%), {elapsed:.1}s",
            fmt_list(&spreads, 2),
            100.0 * identified
        ),
    );
    let s8 = spread(&normalized);
    let v8 = verdict(
        s8 <= 2.0,
        format!(
            "regret / sqrt(K T log T) over T = 2^9..2^13: {} (max/min {s8:.2}, limit 2)",
            fmt_list(&normalized, 3)
        ),
    );
    (v7, v8)
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let spec = sign_data(8, 3, 2.0, 0.1, 9);
    let classes = vc_dims(&[1, 3, 8], 3.0, 8.0);
    let learner = sgd(LossKind::Logistic, &spec);
    let mut failures = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for run in 0..50u64 {
        let cfg = BanditConfig {
            keep_snapshots: true,
            trial: run,
            ..BanditConfig::default()
        };
        let out = bandit_select(&classes, &learner, &spec, 60, &cfg).unwrap();
        let holdout = spec.draw(StreamId::new(Phase::Holdout, 0, run), 2000).unwrap();
        let averaged = out.averaged_model.as_ref().unwrap();
        let snaps = out.trace.snapshots.as_ref().unwrap();
        let avg_risk = mean_loss(averaged, &holdout, LossKind::Logistic).unwrap();
        let per_round = snaps
            .iter()
            .map(|m| mean_loss(m, &holdout, LossKind::Logistic).unwrap())
            .sum::<f64>()
            / snaps.len() as f64;
        worst_margin = worst_margin.min(per_round - avg_risk);
        if !(avg_risk <= per_round + 1e-9) && failures.len() < 3 {
            failures.push(format!("run {run}: {avg_risk} > {per_round}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "50 runs: averaged model never worse than the mean round model (smallest margin {worst_margin:.2e}), {:.1}s{}",
            secs(start.elapsed()),
            fails(&failures)
        ),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Verdict {
    let start = Instant::now();
    let n = 10_000usize;
    let class = &vc_dims(&[2], 4.0, 1.0)[0];
    let gamma = class.penalty.eval(n as f64).unwrap();
    let mut within = 0;
    let mut gaps = Vec::new();
    for run in 0..50u64 {
        let spec = sign_data(2, 2, 2.0, 0.1, 100 + run);
        let learner = sgd(LossKind::Logistic, &spec);
        let samples = spec.draw(StreamId::new(Phase::Train, 1, run), n).unwrap();
        let fit = learner.fit(class, 2, &samples, None).unwrap();
        let sgd_risk = mean_loss(&fit.model, &samples, LossKind::Logistic).unwrap();
        let best = erm_oracle(class, 2, &samples, LossKind::Logistic, &OracleOptions::default()).unwrap();
        let gap = sgd_risk - best.objective;
        if gap <= gamma {
            within += 1;
        }
        gaps.push(gap);
    }
    gaps.sort_by(f64::total_cmp);
    let frac = within as f64 / 50.0;
    verdict(
        frac >= 0.90,
        format!(
            "SGD within gamma = {gamma:.4} of the empirical minimum in {:.0}% of 50 runs (limit 90%), median gap {:.2e}, worst {:.2e}, {:.1}s",
            100.0 * frac,
            gaps[25],
            gaps[49],
            secs(start.elapsed())
        ),
    )
}

// ---------------------------------------------------------------- 11

const FAST_RATE_CONFIG: &str = r#"
[hierarchy]
family = "dims"
dims = [1, 2, 4, 8, 16]
radius = 3.0
penalty = "fast"
penalty_c = 1.0
rate = "per_dimension"
samples_per_quantum = 1.0

[generator]
kind = "fast_rate_regression"
ambient_dim = 16
true_support = 4
weight_norm = 1.0
xbound = 4.0
noise = 0.5
seed = 13

[selector]
kind = "fast"
loss = "squared"

[budget]
total = 100000.0
trials = 100
mc_samples = 100000
oracle_samples = 100000
oracle_mc = 1000000
"#;

fn criterion_11() -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_toml_str(FAST_RATE_CONFIG).unwrap();
    let dims = cfg.hierarchy.dims.clone();
    let records: Vec<TrialRecord> = Experiment::new(cfg).unwrap().run().unwrap();
    let contains = records.iter().filter(|r| dims[r.chosen_index - 1] >= 4).count();
    let frac = contains as f64 / records.len() as f64;
    let bounds: Vec<f64> = records.iter().map(|r| r.bound_rhs).collect();
    for r in &records {
        println!(
            "    fast trial {:>3}: chosen d = {:>2}, risk {:.4}, bound_rhs {:.4}",
            r.trial,
            dims[r.chosen_index - 1],
            r.risk,
            r.bound_rhs
        );
    }
    let mut chosen = std::collections::BTreeMap::new();
    for r in &records {
        *chosen.entry(dims[r.chosen_index - 1]).or_insert(0) += 1;
    }
    verdict(
        frac >= 0.75 && bounds.iter().all(|b| b.is_finite()),
        format!(
            "chosen class contains d* = 4 in {:.0}% of {} trials (limit 75%), chosen dims {chosen:?}, bound_rhs in [{:.4}, {:.4}], {:.1}s",
            100.0 * frac,
            records.len(),
            bounds.iter().copied().fold(f64::INFINITY, f64::min),
            bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            secs(start.elapsed())
        ),
    )
}

// ----------------------------------------------------------------

fn timed(f: impl FnOnce() -> Verdict, limit_s: f64) -> Verdict {
    let start = Instant::now();
    let mut v = f();
    let took = secs(start.elapsed());
    if took > limit_s {
        v.pass = false;
        v.detail.push_str(&format!("; took {took:.1}s, limit {limit_s}s"));
    }
    v
}

#[test]
fn acceptance() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    results.push((1, "grid covering", timed(criterion_1, 10.0)));
    results.push((2, "monotone argmin", timed(criterion_2, 5.0)));
    results.push((3, "grid truncation", timed(criterion_3, 10.0)));
    let (v4, v5) = criterion_4_5();
    results.push((4, "slow-rate oracle inequality", v4));
    results.push((5, "budget scaling", v5));
    results.push((6, "doubling wrapper", timed(criterion_6, 60.0)));
    let (v7, v8) = criterion_7_8();
    results.push((7, "bandit pull counts", v7));
    results.push((8, "bandit regret", v8));
    results.push((9, "averaged model", timed(criterion_9, 300.0)));
    results.push((10, "approximate ERM", timed(criterion_10, 300.0)));
    results.push((11, "fast selector", timed(criterion_11, 900.0)));

    println!();
    for (n, name, v) in &results {
        println!(
            "criterion {n:>2} {:<28} {}  {}",
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
