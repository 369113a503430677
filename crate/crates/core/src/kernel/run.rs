use super::queue::{EventQueue, Payload};
use super::rng::derive_seed;
use super::scenario::{ConfigError, RunLength, ScenarioConfig, StrategyConfig};
use crate::agent::{
    Action, AgentEvent, AgentRng, Behavior, EventKind, MarketView, PriceHistory, TIME_UNIT,
};
use crate::dsl::{self, DslError, ScriptBehavior};
use crate::market::{Account, AgentId, Market, Price, SettlementError, Time, Trade};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("avatar error in family `{family}`: {error}")]
    Avatar { family: String, error: DslError },
    #[error("engine failure: {0}")]
    Engine(String),
}

impl From<SettlementError> for RunError {
    fn from(e: SettlementError) -> Self {
        RunError::Engine(e.to_string())
    }
}

/// Static description of one family in a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyInfo {
    pub family_id: u32,
    pub name: String,
    /// `archetype:<kind>` or `avatar:<script name>`.
    pub strategy: String,
    pub first_agent: AgentId,
    pub n_agents: u32,
    pub initial_cash: i64,
    pub initial_shares: i64,
    /// Canonical source of the script that generated the family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl FamilyInfo {
    pub fn agents(&self) -> std::ops::Range<usize> {
        self.first_agent as usize..(self.first_agent + self.n_agents) as usize
    }
}

/// Initial holdings of every agent, by id.
pub fn initial_holdings(families: &[FamilyInfo]) -> Vec<(i64, i64)> {
    families
        .iter()
        .flat_map(|f| std::iter::repeat_n((f.initial_cash, f.initial_shares), f.n_agents as usize))
        .collect()
}

/// Holdings of every agent right after trade number `trade_index`
/// (0 = before any trade).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub trade_index: u64,
    pub time: Time,
    /// Price of trade `trade_index`, or the initial reference price.
    pub mark_price: Price,
    /// `(cash, shares)` per agent id.
    pub holdings: Vec<(i64, i64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Transactions,
    SimTime,
    MaxSimTime,
    QueueEmpty,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub wakes: u64,
    pub news: u64,
    pub messages: u64,
    pub trade_notifications: u64,
    pub orders: u64,
    pub rejected: u64,
    pub eval_errors: u64,
    pub dropped_messages: u64,
    pub end_time: Time,
    pub stop_reason: Option<StopReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: ScenarioConfig,
    pub families: Vec<FamilyInfo>,
    pub tape: Vec<Trade>,
    pub snapshots: Vec<Snapshot>,
    pub final_accounts: Vec<(i64, i64)>,
    pub stats: RunStats,
}

impl RunResult {
    pub fn prices(&self) -> Vec<Price> {
        self.tape.iter().map(|t| t.price).collect()
    }

    pub fn volumes(&self) -> Vec<i64> {
        self.tape.iter().map(|t| t.qty).collect()
    }

    pub fn seed(&self) -> u64 {
        self.scenario.master_seed
    }
}

/// Delay until the next wake: exponential with the given rate, in
/// microticks, never shorter than one microtick.
pub fn next_wake_delay(rate: f64, rng: &mut AgentRng) -> Time {
    let d = (rng.exponential(rate) * TIME_UNIT as f64).floor();
    if d >= 1.0 {
        if d >= u64::MAX as f64 {
            u64::MAX
        } else {
            d as u64
        }
    } else {
        1
    }
}

pub(crate) struct Agents {
    pub behaviors: Vec<Box<dyn Behavior>>,
    pub families: Vec<FamilyInfo>,
}

/// Builds every agent of the scenario. Family `f` samples its parameters
/// from the stream labelled `params/f`.
pub(crate) fn build_agents(cfg: &ScenarioConfig) -> Result<Agents, RunError> {
    let mut behaviors: Vec<Box<dyn Behavior>> = Vec::new();
    let mut families = Vec::new();
    for (f, fc) in cfg.families.iter().enumerate() {
        let family_id = f as u32;
        let first = behaviors.len() as AgentId;
        let n = fc.n_agents as usize;
        let family_seed = derive_seed(cfg.master_seed, &format!("params/{f}"), 0);
        let (strategy, source) = match &fc.strategy {
            StrategyConfig::Archetype { kind, params } => {
                let decls = kind.configure(params).map_err(|e| {
                    ConfigError::new(format!("families[{f}].strategy.params"), e.to_string())
                })?;
                for p in dsl::sample_family(&decls, n, family_seed) {
                    behaviors.push(Box::new(kind.build(&p)));
                }
                (format!("archetype:{}", kind.name()), None)
            }
            StrategyConfig::Avatar { source } => {
                let program = dsl::parse(source).map_err(|error| RunError::Avatar {
                    family: fc.name.clone(),
                    error,
                })?;
                let program = Arc::new(program);
                for inst in dsl::instantiate_family(&program, n, family_seed, family_id, first) {
                    behaviors.push(Box::new(ScriptBehavior::new(program.clone(), inst)));
                }
                (
                    format!("avatar:{}", program.spec.name),
                    Some(dsl::print(&program.spec)),
                )
            }
            StrategyConfig::AvatarFile(_) => {
                return Err(ConfigError::new(
                    format!("families[{f}].strategy.avatar_file"),
                    "file reference was not resolved",
                )
                .into())
            }
        };
        families.push(FamilyInfo {
            family_id,
            name: fc.name.clone(),
            strategy,
            first_agent: first,
            n_agents: fc.n_agents,
            initial_cash: fc.initial_cash,
            initial_shares: fc.initial_shares,
            source,
        });
    }
    Ok(Agents {
        behaviors,
        families,
    })
}

struct Kernel {
    cfg: ScenarioConfig,
    behaviors: Vec<Box<dyn Behavior>>,
    handles: Vec<[bool; 4]>,
    rngs: Vec<AgentRng>,
    clocks: Vec<AgentRng>,
    news_rng: AgentRng,
    market: Market,
    history: PriceHistory,
    queue: EventQueue,
    tape: Vec<Trade>,
    snapshots: Vec<Snapshot>,
    stats: RunStats,
    now: Time,
}

/// Runs a scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let Agents {
        behaviors,
        families,
    } = build_agents(cfg)?;

    let mut accounts = Vec::with_capacity(behaviors.len());
    let mut rngs = Vec::with_capacity(behaviors.len());
    let mut clocks = Vec::with_capacity(behaviors.len());
    for fam in &families {
        for (i, id) in fam.agents().enumerate() {
            accounts.push(Account::new(
                id as AgentId,
                fam.initial_cash,
                fam.initial_shares,
            ));
            let f = fam.family_id;
            rngs.push(AgentRng::from_seed(derive_seed(
                cfg.master_seed,
                &format!("agent/{f}"),
                i as u64,
            )));
            clocks.push(AgentRng::from_seed(derive_seed(
                cfg.master_seed,
                &format!("clock/{f}"),
                i as u64,
            )));
        }
    }
    let handles = behaviors
        .iter()
        .map(|b| {
            [
                EventKind::Wake,
                EventKind::Trade,
                EventKind::News,
                EventKind::Message,
            ]
            .map(|k| b.handles(k))
        })
        .collect();

    let mut k = Kernel {
        cfg: cfg.clone(),
        behaviors,
        handles,
        rngs,
        clocks,
        news_rng: AgentRng::from_seed(derive_seed(cfg.master_seed, "news", 0)),
        market: Market::new(accounts),
        history: PriceHistory::new(),
        queue: EventQueue::new(),
        tape: Vec::new(),
        snapshots: Vec::new(),
        stats: RunStats::default(),
        now: 0,
    };
    k.start();
    k.main_loop()?;
    k.take_final_snapshot();

    let final_accounts = k
        .market
        .accounts()
        .iter()
        .map(|a| (a.cash, a.shares))
        .collect();
    Ok(RunResult {
        scenario: k.cfg,
        families,
        tape: k.tape,
        snapshots: k.snapshots,
        final_accounts,
        stats: k.stats,
    })
}

impl Kernel {
    fn start(&mut self) {
        for a in 0..self.behaviors.len() {
            if self.handles[a][0] {
                self.schedule_wake(a as AgentId, 0);
            }
        }
        self.schedule_news(0);
        if let RunLength::SimTime(t) = self.cfg.run_length {
            self.queue.push(t, Payload::EndOfRun);
        }
        self.snapshots.push(Snapshot {
            trade_index: 0,
            time: 0,
            mark_price: self.cfg.initial_reference_price,
            holdings: self.holdings(),
        });
    }

    fn holdings(&self) -> Vec<(i64, i64)> {
        self.market
            .accounts()
            .iter()
            .map(|a| (a.cash, a.shares))
            .collect()
    }

    fn schedule_wake(&mut self, agent: AgentId, from: Time) {
        let rate = self.behaviors[agent as usize].wake_rate();
        let d = next_wake_delay(rate, &mut self.clocks[agent as usize]);
        self.queue
            .push(from.saturating_add(d), Payload::Wake(agent));
    }

    fn schedule_news(&mut self, from: Time) {
        if self.cfg.news_rate <= 0.0 {
            return;
        }
        let d = next_wake_delay(self.cfg.news_rate, &mut self.news_rng);
        let v = self.news_rng.normal(0.0, self.cfg.news_sigma);
        self.queue.push(from.saturating_add(d), Payload::News(v));
    }

    fn main_loop(&mut self) -> Result<(), RunError> {
        let target = match self.cfg.run_length {
            RunLength::Transactions(n) => Some(n),
            RunLength::SimTime(_) => None,
        };
        let n_agents = self.behaviors.len() as AgentId;
        loop {
            let Some(ev) = self.queue.pop() else {
                self.stats.stop_reason = Some(StopReason::QueueEmpty);
                break;
            };
            if self.cfg.max_sim_time.is_some_and(|m| ev.time > m) {
                self.stats.stop_reason = Some(StopReason::MaxSimTime);
                break;
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.stats.end_time = ev.time;
            self.stats.events += 1;
            let before = self.tape.len();
            match ev.payload {
                Payload::Wake(a) => {
                    self.stats.wakes += 1;
                    self.dispatch(a, AgentEvent::Wake)?;
                    self.schedule_wake(a, ev.time);
                }
                Payload::News(v) => {
                    self.stats.news += 1;
                    for a in 0..n_agents {
                        if self.handles[a as usize][2] {
                            self.dispatch(a, AgentEvent::News(v))?;
                        }
                    }
                    self.schedule_news(ev.time);
                }
                Payload::Message { from, to, value } => {
                    self.stats.messages += 1;
                    if self.handles[to as usize][3] {
                        self.dispatch(to, AgentEvent::Message { from, value })?;
                    }
                }
                Payload::Filled(a) => {
                    self.stats.trade_notifications += 1;
                    self.dispatch(a, AgentEvent::Trade)?;
                }
                Payload::EndOfRun => {
                    self.stats.stop_reason = Some(StopReason::SimTime);
                    break;
                }
            }
            if self.tape.len() > before {
                self.after_trades(before);
            }
            if target.is_some_and(|n| self.tape.len() as u64 >= n) {
                self.stats.stop_reason = Some(StopReason::Transactions);
                break;
            }
        }
        Ok(())
    }

    /// Fill notifications and interval snapshots for trades
    /// `tape[before..]`, all produced by the event just processed.
    fn after_trades(&mut self, before: usize) {
        let mut filled = BTreeSet::new();
        for t in &self.tape[before..] {
            filled.insert(t.buy_agent);
            filled.insert(t.sell_agent);
        }
        for a in filled {
            if self.handles[a as usize][1] {
                self.queue.push(self.now + 1, Payload::Filled(a));
            }
        }
        let interval = self.cfg.snapshot_interval as usize;
        let first = before / interval + 1;
        let last = self.tape.len() / interval;
        for j in first..=last {
            self.snapshot_at(j * interval);
        }
    }

    /// Holdings right after trade `m`, recovered by undoing the later
    /// trades of the current batch.
    fn snapshot_at(&mut self, m: usize) {
        let mut holdings = self.holdings();
        for t in &self.tape[m..] {
            let value = t.price * t.qty;
            let b = &mut holdings[t.buy_agent as usize];
            b.0 += value;
            b.1 -= t.qty;
            let s = &mut holdings[t.sell_agent as usize];
            s.0 -= value;
            s.1 += t.qty;
        }
        let t = &self.tape[m - 1];
        self.snapshots.push(Snapshot {
            trade_index: m as u64,
            time: t.time,
            mark_price: t.price,
            holdings,
        });
    }

    fn take_final_snapshot(&mut self) {
        let n = self.tape.len() as u64;
        if self.snapshots.last().map(|s| s.trade_index) != Some(n) {
            self.snapshot_at(n as usize);
        }
    }

    fn dispatch(&mut self, agent: AgentId, event: AgentEvent) -> Result<(), RunError> {
        let i = agent as usize;
        let acct = &self.market.accounts()[i];
        let view = MarketView {
            time: self.now,
            best_bid: self.market.book().best_bid(),
            best_ask: self.market.book().best_ask(),
            initial_price: self.cfg.initial_reference_price,
            agent_id: agent,
            agent_count: self.behaviors.len() as u32,
            cash: acct.cash,
            shares: acct.shares,
            history: &self.history,
        };
        let actions = match self.behaviors[i].on_event(&event, &view, &mut self.rngs[i]) {
            Ok(a) => a,
            Err(e) => {
                self.stats.eval_errors += 1;
                log::debug!(
                    "agent {agent} skipped {:?} at t={}: {e}",
                    event.kind(),
                    self.now
                );
                return Ok(());
            }
        };
        for action in actions {
            self.apply(agent, action)?;
        }
        Ok(())
    }

    fn apply(&mut self, agent: AgentId, action: Action) -> Result<(), RunError> {
        let now = self.now;
        let trades = match action {
            Action::Limit { side, price, qty } => {
                self.stats.orders += 1;
                let s = self.market.submit_limit(agent, side, price, qty, now)?;
                if matches!(s.outcome, crate::market::LimitOutcome::Rejected(_)) {
                    self.stats.rejected += 1;
                }
                s.trades
            }
            Action::Market { side, qty } => {
                self.stats.orders += 1;
                let s = self.market.submit_market(agent, side, qty, now)?;
                if matches!(s.outcome, crate::market::MarketOutcome::Rejected(_)) {
                    self.stats.rejected += 1;
                }
                s.trades
            }
            Action::CancelAll => {
                self.market.cancel_all(agent);
                return Ok(());
            }
            Action::Send { to, value } => {
                if to >= 0 && (to as u64) < self.behaviors.len() as u64 {
                    let at = now.saturating_add(self.cfg.message_latency);
                    self.queue.push(
                        at,
                        Payload::Message {
                            from: agent,
                            to: to as AgentId,
                            value,
                        },
                    );
                } else {
                    self.stats.dropped_messages += 1;
                }
                return Ok(());
            }
        };
        for t in &trades {
            self.history.push(t.price, t.qty);
        }
        self.tape.extend(trades);
        Ok(())
    }
}
