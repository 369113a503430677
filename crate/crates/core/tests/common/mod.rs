#![allow(dead_code)]

use avatar_market::agent::{AgentEvent, AgentRng, Behavior, EventKind, MarketView, PriceHistory};
use avatar_market::dsl::{self, AgentInstance, Distribution, ScriptBehavior};
use avatar_market::kernel::rng::derive_seed;
use avatar_market::kernel::ScenarioConfig;
use avatar_market::strategy::Archetype;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const ARCHETYPES: [Archetype; 5] = [
    Archetype::Random,
    Archetype::Momentum,
    Archetype::Oscillatory,
    Archetype::Bollinger,
    Archetype::VolumeSeeker,
];

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus(rel: &str) -> PathBuf {
    repo_root().join("corpus").join(rel)
}

pub fn load_scenario(rel: &str) -> ScenarioConfig {
    ScenarioConfig::load(&corpus(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedEvent {
    Wake,
    Trade,
    News(f64),
}

#[derive(Debug, Deserialize)]
pub struct FeedStep {
    pub time: u64,
    pub price: i64,
    pub qty: i64,
    pub best_bid: Option<i64>,
    pub best_ask: Option<i64>,
    pub cash: i64,
    pub shares: i64,
    pub event: FeedEvent,
}

#[derive(Debug, Deserialize)]
pub struct Feed {
    pub initial_price: i64,
    pub steps: Vec<FeedStep>,
}

pub fn load_feed() -> Feed {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/market_feed.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Parameter overrides that move each archetype into a regime where the
/// feed exercises every branch of its rule.
pub fn twin_overrides(kind: Archetype) -> BTreeMap<String, Distribution> {
    let mut o = BTreeMap::new();
    match kind {
        Archetype::Random => {
            o.insert("sigma".into(), Distribution::Uniform(0.001, 0.05));
            o.insert("news_sens".into(), Distribution::Uniform(0.0, 2.0));
            o.insert("p_buy".into(), Distribution::Uniform(0.3, 0.7));
        }
        Archetype::Momentum => {
            o.insert("lookback".into(), Distribution::UniformInt(1, 30));
            o.insert("threshold".into(), Distribution::Uniform(0.0, 0.01));
        }
        Archetype::Oscillatory => {
            o.insert(
                "period".into(),
                Distribution::UniformInt(500_000, 5_000_000),
            );
        }
        Archetype::Bollinger => {
            o.insert("window".into(), Distribution::UniformInt(2, 40));
            o.insert("k".into(), Distribution::Uniform(0.5, 2.5));
        }
        Archetype::VolumeSeeker => {
            o.insert("window".into(), Distribution::UniformInt(1, 10));
            o.insert("multiplier".into(), Distribution::Uniform(1.01, 1.8));
        }
    }
    o
}

/// Drives a native archetype and its script twin through the recorded
/// feed. Returns `(decisions compared, decisions that emitted actions)`,
/// or the first divergence.
pub fn twin_check(
    kind: Archetype,
    feed: &Feed,
    family_seed: u64,
    n_agents: usize,
) -> Result<(usize, usize), String> {
    let program = Arc::new(dsl::parse(kind.twin_source()).map_err(|e| format!("{kind}: {e}"))?);

    let defaults = kind
        .configure(&BTreeMap::new())
        .map_err(|e| e.to_string())?;
    let native_default = dsl::sample_family(&defaults, n_agents, family_seed);
    let twin_default = dsl::sample_family(&program.spec.params, n_agents, family_seed);
    if native_default != twin_default {
        return Err(format!("{kind}: default parameters differ"));
    }

    let decls = kind
        .configure(&twin_overrides(kind))
        .map_err(|e| e.to_string())?;
    let (mut compared, mut active) = (0, 0);
    for (i, params) in dsl::sample_family(&decls, n_agents, family_seed)
        .into_iter()
        .enumerate()
    {
        let id = i as u32;
        let mut native: Box<dyn Behavior> = Box::new(kind.build(&params));
        let mut twin: Box<dyn Behavior> = Box::new(ScriptBehavior::new(
            program.clone(),
            AgentInstance::new(&program, id, 0, params),
        ));
        if native.wake_rate() != twin.wake_rate() {
            return Err(format!("{kind} agent {i}: wake rates differ"));
        }
        for k in [
            EventKind::Wake,
            EventKind::Trade,
            EventKind::News,
            EventKind::Message,
        ] {
            if native.handles(k) != twin.handles(k) {
                return Err(format!("{kind} agent {i}: handler sets differ on {k:?}"));
            }
        }
        let seed = derive_seed(family_seed, "agent", i as u64);
        let (mut rng_a, mut rng_b) = (AgentRng::from_seed(seed), AgentRng::from_seed(seed));
        let mut history = PriceHistory::new();
        for (s, step) in feed.steps.iter().enumerate() {
            history.push(step.price, step.qty);
            let event = match step.event {
                FeedEvent::Wake => AgentEvent::Wake,
                FeedEvent::Trade => AgentEvent::Trade,
                FeedEvent::News(v) => AgentEvent::News(v),
            };
            if !native.handles(event.kind()) {
                continue;
            }
            let view = MarketView {
                time: step.time,
                best_bid: step.best_bid,
                best_ask: step.best_ask,
                initial_price: feed.initial_price,
                agent_id: id,
                agent_count: n_agents as u32,
                cash: step.cash,
                shares: step.shares,
                history: &history,
            };
            let a = native.on_event(&event, &view, &mut rng_a);
            let b = twin.on_event(&event, &view, &mut rng_b);
            if a != b {
                return Err(format!(
                    "{kind} agent {i} step {s}: native {a:?} vs twin {b:?}"
                ));
            }
            compared += 1;
            active += a.map_or(0, |v| usize::from(!v.is_empty()));
        }
    }
    Ok((compared, active))
}

pub mod api {
    use avatar_market::analytics::LeaderboardEntry;
    use avatar_market::archive::{self, Archive};
    use avatar_market::kernel;
    use avatar_market::service::{router, Service};
    use axum::body::Body;
    use axum::http::{Method, Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use serde_json::{json, Value};
    use std::path::Path;
    use std::time::{Duration, Instant};
    use tower::ServiceExt;

    pub const TRADER_A: &str = r#"avatar "buyer" {
    param q: int ~ constant(2);
    on wake { if rand() < 0.3 { submit_limit(buy, coalesce(best_ask, initial_price), q); } }
}"#;
    pub const TRADER_B: &str = r#"avatar "seller" {
    param q: int ~ uniform_int(1, 3);
    on wake { if rand() < 0.3 { submit_limit(sell, coalesce(best_bid, initial_price), q); } }
}"#;

    pub fn app(root: &Path) -> Router {
        router(Service::open(root).unwrap())
    }

    pub async fn call(
        app: &Router,
        method: Method,
        uri: &str,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes)
                .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub fn session_config(disclosure: &str) -> Value {
        json!({
            "title": "desk round",
            "scenario": {
                "families": [
                    {"name": "noise", "strategy": {"archetype": {"kind": "random", "params": {"qmax": {"constant": 4}}}},
                     "n_agents": 40, "initial_cash": 1000000, "initial_shares": 200},
                    {"name": "trend", "strategy": {"archetype": {"kind": "momentum"}},
                     "n_agents": 10, "initial_cash": 1000000, "initial_shares": 200}
                ],
                "initial_reference_price": 1000,
                "run_length": {"transactions": 5000}
            },
            "participant_family": {"n_agents": 10, "initial_cash": 1000000, "initial_shares": 200},
            "disclosure": disclosure
        })
    }

    pub async fn wait_done(app: &Router, run_id: u64) -> Value {
        let start = Instant::now();
        loop {
            let (s, run) = call(app, Method::GET, &format!("/runs/{run_id}"), None).await;
            assert_eq!(s, StatusCode::OK);
            match run["status"].as_str() {
                Some("Done") => return run,
                Some("Failed") => panic!("run failed: {run}"),
                _ => {}
            }
            assert!(
                start.elapsed() < Duration::from_secs(120),
                "run {run_id} did not finish"
            );
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    /// Final leaderboard computed from the archived tape alone: replay the
    /// trades over the initial endowments, mark at the last trade price.
    pub fn leaderboard_from_tape(dir: &Path) -> Vec<(u32, String, i128, f64)> {
        let a = Archive::load(dir).unwrap();
        let fams = &a.config.families;
        let mut holdings = Vec::new();
        for f in fams {
            holdings.extend(std::iter::repeat_n(
                (f.initial_cash, f.initial_shares),
                f.n_agents as usize,
            ));
        }
        for t in &a.tape {
            holdings[t.buy_agent as usize].0 -= t.price * t.qty;
            holdings[t.buy_agent as usize].1 += t.qty;
            holdings[t.sell_agent as usize].0 += t.price * t.qty;
            holdings[t.sell_agent as usize].1 -= t.qty;
        }
        let mark =
            a.tape
                .last()
                .map_or(a.config.scenario.initial_reference_price, |t| t.price) as i128;
        let mut rows: Vec<(String, i128, u32, u32)> = fams
            .iter()
            .map(|f| {
                let start = f.first_agent as usize;
                let w = holdings[start..start + f.n_agents as usize]
                    .iter()
                    .map(|&(c, s)| c as i128 + s as i128 * mark)
                    .sum();
                (f.name.clone(), w, f.n_agents, f.family_id)
            })
            .collect();
        rows.sort_by(|x, y| {
            (y.1 * x.2 as i128)
                .cmp(&(x.1 * y.2 as i128))
                .then(x.3.cmp(&y.3))
        });
        rows.into_iter()
            .enumerate()
            .map(|(i, (name, w, n, _))| (i as u32 + 1, name, w, w as f64 / n as f64))
            .collect()
    }

    /// Create session, register two participants, submit, run, then check
    /// the served leaderboard against the archive and replay the archived
    /// scenario. Returns a one-line summary.
    pub async fn round_trip(root: &Path) -> Result<String, String> {
        let app = app(root);
        let (s, session) = call(
            &app,
            Method::POST,
            "/sessions",
            Some(session_config("full")),
        )
        .await;
        if s != StatusCode::CREATED {
            return Err(format!("create session: {s} {session}"));
        }
        let sid = session["session_id"].as_u64().unwrap();
        let mut regs = Vec::new();
        for (name, src) in [("alice", TRADER_A), ("bob", TRADER_B)] {
            let (s, reg) = call(
                &app,
                Method::POST,
                &format!("/sessions/{sid}/participants"),
                Some(json!({"name": name})),
            )
            .await;
            if s != StatusCode::CREATED {
                return Err(format!("register {name}: {s} {reg}"));
            }
            let body = json!({"participant_id": reg["participant_id"], "token": reg["token"], "source": src});
            let (s, receipt) = call(
                &app,
                Method::POST,
                &format!("/sessions/{sid}/avatars"),
                Some(body),
            )
            .await;
            if s != StatusCode::CREATED || receipt["valid"] != json!(true) {
                return Err(format!("submit {name}: {s} {receipt}"));
            }
            regs.push(reg);
        }
        let (s, run) = call(
            &app,
            Method::POST,
            &format!("/sessions/{sid}/runs"),
            Some(json!({"seed": 2024})),
        )
        .await;
        if s != StatusCode::ACCEPTED {
            return Err(format!("start run: {s} {run}"));
        }
        let run_id = run["run_id"].as_u64().unwrap();
        let done = wait_done(&app, run_id).await;
        let dir = Path::new(done["archive"].as_str().unwrap()).to_path_buf();

        let (s, lb) = call(
            &app,
            Method::GET,
            &format!("/runs/{run_id}/leaderboard"),
            None,
        )
        .await;
        if s != StatusCode::OK {
            return Err(format!("leaderboard: {s} {lb}"));
        }
        let served: Vec<LeaderboardEntry> =
            serde_json::from_value(lb).map_err(|e| e.to_string())?;
        let served: Vec<_> = served
            .into_iter()
            .map(|e| (e.rank, e.name, e.wealth, e.average_wealth))
            .collect();
        let recomputed = leaderboard_from_tape(&dir);
        if served != recomputed {
            return Err(format!(
                "leaderboard {served:?} != recomputed {recomputed:?}"
            ));
        }
        if served.len() != 4
            || !served.iter().any(|r| r.1 == "alice")
            || !served.iter().any(|r| r.1 == "bob")
        {
            return Err(format!("unexpected families: {served:?}"));
        }

        let archived = Archive::load(&dir).map_err(|e| e.to_string())?;
        let replay = kernel::run(&archived.config.scenario).map_err(|e| e.to_string())?;
        let replay_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        archive::write_archive(replay_dir.path(), &replay, archived.config.max_lag)
            .map_err(|e| e.to_string())?;
        let original = std::fs::read(dir.join(archive::TAPE_FILE)).map_err(|e| e.to_string())?;
        let replayed =
            std::fs::read(replay_dir.path().join(archive::TAPE_FILE)).map_err(|e| e.to_string())?;
        if original != replayed {
            return Err("replayed tape differs from the archived tape".into());
        }
        Ok(format!(
            "{} trades, {} families ranked, tape replay {} bytes identical",
            archived.tape.len(),
            served.len(),
            original.len()
        ))
    }
}
