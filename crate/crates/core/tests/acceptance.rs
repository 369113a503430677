//! Acceptance suite. Runs every system-level criterion and prints one
//! PASS/FAIL line each; exits non-zero if any fails.

mod common;

use avatar_market::agent::AgentRng;
use avatar_market::analytics::{acf, excess_kurtosis, family_wealth, log_returns, relative_wealth};
use avatar_market::kernel::{self, initial_holdings, RunResult};
use avatar_market::market::reference::{cross_check, random_ops};
use common::{load_feed, load_scenario, twin_check, ARCHETYPES};
use std::time::{Duration, Instant};

const SEEDS: std::ops::Range<u64> = 0..10;

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

fn totals(h: &[(i64, i64)]) -> (i64, i64) {
    h.iter().fold((0, 0), |(c, s), &(a, b)| (c + a, s + b))
}

fn paper_scale() -> Outcome {
    let cfg = load_scenario("examples/paper_scale.json");
    let families = cfg.families.len();
    let sizes_ok = cfg.families.iter().all(|f| f.n_agents == 1000);
    let start = Instant::now();
    let a = match kernel::run(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let b = kernel::run(&cfg).expect("second run");
    let identical = serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap();
    let n = a.tape.len();
    outcome(
        families == 7 && sizes_ok && n >= 350_000 && elapsed <= Duration::from_secs(600) && identical,
        format!(
            "{families} families x 1000 agents, {n} transactions in {:.1}s, rerun byte-identical: {identical}",
            elapsed.as_secs_f64()
        ),
    )
}

fn conservation() -> Outcome {
    let mut checked = 0;
    for seed in SEEDS.chain([u64::MAX, 0xDEAD_BEEF]) {
        let mut cfg = load_scenario("examples/closed.json");
        cfg.master_seed = seed;
        let r = kernel::run(&cfg).expect("closed run");
        let start = totals(&initial_holdings(&r.families));
        if totals(&r.final_accounts) != start {
            return outcome(
                false,
                format!(
                    "seed {seed}: totals {:?} != {start:?}",
                    totals(&r.final_accounts)
                ),
            );
        }
        if let Some(s) = r.snapshots.iter().find(|s| totals(&s.holdings) != start) {
            return outcome(
                false,
                format!(
                    "seed {seed}: snapshot {} breaks conservation",
                    s.trade_index
                ),
            );
        }
        checked += 1;
    }
    outcome(
        true,
        format!("cash and share totals exact in {checked} seeds"),
    )
}

fn matching_oracle() -> Outcome {
    let endowments = vec![(1_000_000, 1_000); 8];
    let mut trades = 0;
    for seed in 0..100 {
        match cross_check(&random_ops(seed, 10_000, 8), &endowments) {
            Ok(t) => trades += t.len(),
            Err(m) => return outcome(false, format!("seed {seed}: {m}")),
        }
    }
    outcome(
        true,
        format!("100 seeds x 10000 orders, {trades} trades, tapes equal"),
    )
}

struct Facts {
    raw_in: usize,
    abs_out: usize,
    kurtosis: f64,
    n: usize,
    elapsed: Duration,
}

fn facts(r: &RunResult, elapsed: Duration) -> Facts {
    let returns = log_returns(&r.prices()).expect("returns");
    let abs: Vec<f64> = returns.iter().map(|x| x.abs()).collect();
    let band = 2.0 / (returns.len() as f64).sqrt();
    let raw = acf(&returns, 20).expect("acf");
    let absr = acf(&abs, 20).expect("acf");
    Facts {
        raw_in: raw[1..].iter().filter(|v| v.abs() <= band).count(),
        abs_out: absr[1..].iter().filter(|&&v| v > band).count(),
        kurtosis: excess_kurtosis(&returns).expect("kurtosis"),
        n: r.tape.len(),
        elapsed,
    }
}

fn stylized_facts() -> Vec<(String, Outcome)> {
    let mut rows = Vec::new();
    for seed in SEEDS {
        let mut cfg = load_scenario("examples/desk.json");
        cfg.master_seed = seed;
        let start = Instant::now();
        let r = kernel::run(&cfg).expect("desk run");
        rows.push(facts(&r, start.elapsed()));
    }
    let count = |f: &dyn Fn(&Facts) -> bool| rows.iter().filter(|r| f(r)).count();
    let sizes = count(&|r| r.n >= 100_000);
    let a = count(&|r| r.raw_in >= 16);
    let b = count(&|r| r.abs_out >= 10);
    let c = count(&|r| r.kurtosis > 1.0);
    let slowest = rows.iter().map(|r| r.elapsed).max().unwrap();
    let list = |f: &dyn Fn(&Facts) -> String| rows.iter().map(f).collect::<Vec<_>>().join(" ");
    vec![
        (
            "4a".into(),
            outcome(
                a >= 8 && sizes == 10,
                format!(
                    "raw ACF inside band for >=16/20 lags in {a}/10 seeds (per seed: {})",
                    list(&|r| r.raw_in.to_string())
                ),
            ),
        ),
        (
            "4b".into(),
            outcome(
                b >= 8 && sizes == 10,
                format!(
                    "|r| ACF above band for >=10/20 lags in {b}/10 seeds (per seed: {})",
                    list(&|r| r.abs_out.to_string())
                ),
            ),
        ),
        (
            "4c".into(),
            outcome(
                c >= 8 && sizes == 10,
                format!(
                    "excess kurtosis > 1 in {c}/10 seeds (per seed: {})",
                    list(&|r| format!("{:.2}", r.kurtosis))
                ),
            ),
        ),
        (
            "4t".into(),
            outcome(
                slowest <= Duration::from_secs(120) && sizes == 10,
                format!(
                    "slowest seed {:.2}s, all runs >= 100000 transactions: {}",
                    slowest.as_secs_f64(),
                    sizes == 10
                ),
            ),
        ),
    ]
}

/// Share of seeds outside the fixed set that meet the per-seed 4(a)
/// condition; reported alongside the verdict, not part of it.
fn raw_acf_rate_on_unseen_seeds() -> (usize, usize) {
    let seeds = 100..200u64;
    let n = seeds.clone().count();
    let hits = seeds
        .filter(|&seed| {
            let mut cfg = load_scenario("examples/desk.json");
            cfg.master_seed = seed;
            let r = kernel::run(&cfg).expect("desk run");
            facts(&r, Duration::ZERO).raw_in >= 16
        })
        .count();
    (hits, n)
}

fn sd(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn steady_state() -> Outcome {
    let (mut vol_ok, mut sd_ok) = (0, 0);
    let mut notes = Vec::new();
    for seed in SEEDS {
        let mut cfg = load_scenario("examples/closed.json");
        cfg.master_seed = seed;
        let r = kernel::run(&cfg).expect("closed run");
        let n = r.tape.len();
        let tenth = n / 10;
        let early: i64 = r.tape[..tenth].iter().map(|t| t.qty).sum();
        let late: i64 = r.tape[n - tenth..].iter().map(|t| t.qty).sum();
        let prices: Vec<f64> = r.tape.iter().map(|t| t.price as f64).collect();
        let (first, second) = (sd(&prices[..n / 2]), sd(&prices[n / 2..]));
        vol_ok += usize::from(early > late);
        sd_ok += usize::from(second < first);
        notes.push(format!("{early}/{late}"));
    }
    outcome(
        vol_ok >= 8 && sd_ok >= 8,
        format!(
            "early > late volume in {vol_ok}/10 seeds, second-half sd lower in {sd_ok}/10 (volumes {})",
            notes.join(" ")
        ),
    )
}

fn twins() -> Outcome {
    let feed = load_feed();
    let mut total = 0;
    for kind in ARCHETYPES {
        for seed in [1, 2, 3] {
            match twin_check(kind, &feed, seed, 8) {
                Ok((n, _)) => total += n,
                Err(e) => return outcome(false, e),
            }
        }
    }
    outcome(
        true,
        format!(
            "5 archetypes, {} feed steps, {total} decisions identical",
            feed.steps.len()
        ),
    )
}

fn analytics_identities() -> Outcome {
    let mut cfg = load_scenario("examples/desk.json");
    cfg.master_seed = 3;
    let r = kernel::run(&cfg).expect("desk run");
    let worst_sum = r
        .snapshots
        .iter()
        .map(|s| {
            (relative_wealth(&family_wealth(&r.families, s))
                .unwrap()
                .iter()
                .sum::<f64>()
                - 1.0)
                .abs()
        })
        .fold(0.0, f64::max);

    let prices = r.prices();
    let returns = log_returns(&prices).unwrap();
    let acf0 = acf(&returns, 5).unwrap()[0];
    let telescoped: f64 = returns.iter().sum();
    let direct = (*prices.last().unwrap() as f64 / prices[0] as f64).ln();
    let tele_err = (telescoped - direct).abs() / direct.abs().max(1e-300);

    let mut rng = AgentRng::from_seed(20_240_101);
    let gauss: Vec<f64> = (0..100_000).map(|_| rng.normal(0.0, 1.0)).collect();
    let k = excess_kurtosis(&gauss).unwrap();

    outcome(
        worst_sum <= 1e-12 && (acf0 - 1.0).abs() < 1e-15 && tele_err <= 1e-9 && k.abs() <= 0.1,
        format!(
            "max |sum(rel wealth) - 1| = {worst_sum:.1e} over {} snapshots, ACF(0) = {acf0}, telescoping rel err {tele_err:.1e}, Gaussian excess kurtosis {k:.4}",
            r.snapshots.len()
        ),
    )
}

fn service_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    match rt.block_on(common::api::round_trip(dir.path())) {
        Ok(s) => outcome(true, s),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let mut results: Vec<(String, Outcome)> = vec![
        ("1".into(), paper_scale()),
        ("2".into(), conservation()),
        ("3".into(), matching_oracle()),
    ];
    results.extend(stylized_facts());
    results.push(("5".into(), steady_state()));
    results.push(("6".into(), twins()));
    results.push(("7".into(), analytics_identities()));
    results.push(("8".into(), service_round_trip()));

    println!();
    for (id, o) in &results {
        println!(
            "criterion {id:<3} {}  {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let (hits, n) = raw_acf_rate_on_unseen_seeds();
    println!("note 4a: seeds 100..199 meet the per-seed raw ACF condition in {hits}/{n} runs");
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(id, _)| id.as_str())
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} checks passed", results.len());
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
