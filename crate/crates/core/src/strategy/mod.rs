//! Built-in archetypes, implemented natively. Each one has a script twin
//! in `corpus/archetypes/` that makes the same decisions from the same
//! parameters and random stream.

use crate::agent::{Action, AgentEvent, AgentRng, Behavior, EvalError, EventKind, MarketView};
use crate::dsl::ast::{Literal, ParamDecl, Type};
use crate::dsl::{Distribution, Value};
use crate::market::Side;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Random,
    Momentum,
    Oscillatory,
    Bollinger,
    VolumeSeeker,
}

pub const ALL: [Archetype; 5] = [
    Archetype::Random,
    Archetype::Momentum,
    Archetype::Oscillatory,
    Archetype::Bollinger,
    Archetype::VolumeSeeker,
];

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("parameter `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

fn decl(name: &str, ty: Type, dist: Distribution) -> ParamDecl {
    ParamDecl {
        name: name.to_string(),
        ty,
        dist,
        span: Default::default(),
    }
}

fn real(v: f64) -> Distribution {
    Distribution::Constant(Literal::Real(v))
}

fn int(v: i64) -> Distribution {
    Distribution::Constant(Literal::Int(v))
}

/// Lower/upper limits on a parameter's support, with strictness flags.
struct Limit {
    name: &'static str,
    min: f64,
    min_strict: bool,
    max: Option<f64>,
}

const fn lim(name: &'static str, min: f64, min_strict: bool) -> Limit {
    Limit {
        name,
        min,
        min_strict,
        max: None,
    }
}

impl Archetype {
    pub fn name(self) -> &'static str {
        match self {
            Archetype::Random => "random",
            Archetype::Momentum => "momentum",
            Archetype::Oscillatory => "oscillatory",
            Archetype::Bollinger => "bollinger",
            Archetype::VolumeSeeker => "volume_seeker",
        }
    }

    /// Default parameter declarations, in the order both the native
    /// implementation and the twin script index them.
    pub fn schema(self) -> Vec<ParamDecl> {
        let mut v = match self {
            Archetype::Random => vec![
                decl("p_buy", Type::Real, real(0.5)),
                decl("sigma", Type::Real, real(0.01)),
                decl("qmax", Type::Int, int(10)),
            ],
            Archetype::Momentum => vec![
                decl("lookback", Type::Int, int(10)),
                decl("threshold", Type::Real, real(0.005)),
                decl("q", Type::Int, int(5)),
            ],
            Archetype::Oscillatory => vec![
                decl(
                    "period",
                    Type::Int,
                    int(20 * crate::agent::TIME_UNIT as i64),
                ),
                decl("q", Type::Int, int(5)),
            ],
            Archetype::Bollinger => vec![
                decl("window", Type::Int, int(20)),
                decl("k", Type::Real, real(2.0)),
                decl("q", Type::Int, int(5)),
            ],
            Archetype::VolumeSeeker => vec![
                decl("window", Type::Int, int(20)),
                decl("multiplier", Type::Real, real(2.0)),
                decl("q", Type::Int, int(5)),
            ],
        };
        v.push(decl("wake_rate", Type::Real, real(1.0)));
        v.push(decl("news_sens", Type::Real, real(0.0)));
        v
    }

    fn limits(self) -> Vec<Limit> {
        let mut v = match self {
            Archetype::Random => vec![
                Limit {
                    name: "p_buy",
                    min: 0.0,
                    min_strict: false,
                    max: Some(1.0),
                },
                lim("sigma", 0.0, false),
                lim("qmax", 1.0, false),
            ],
            Archetype::Momentum => vec![
                lim("lookback", 1.0, false),
                lim("threshold", 0.0, false),
                lim("q", 1.0, false),
            ],
            Archetype::Oscillatory => vec![lim("period", 2.0, false), lim("q", 1.0, false)],
            Archetype::Bollinger => vec![
                lim("window", 2.0, false),
                lim("k", 0.0, true),
                lim("q", 1.0, false),
            ],
            Archetype::VolumeSeeker => vec![
                lim("window", 1.0, false),
                lim("multiplier", 1.0, true),
                lim("q", 1.0, false),
            ],
        };
        v.push(lim("wake_rate", 0.0, true));
        v
    }

    /// The schema with some distributions replaced, after checking that
    /// every replacement keeps the parameter within its allowed range.
    pub fn configure(
        self,
        overrides: &BTreeMap<String, Distribution>,
    ) -> Result<Vec<ParamDecl>, ParamError> {
        let mut decls = self.schema();
        for (name, dist) in overrides {
            let d = decls
                .iter_mut()
                .find(|d| &d.name == name)
                .ok_or_else(|| ParamError::Unknown(name.clone()))?;
            d.dist = *dist;
        }
        let limits = self.limits();
        for d in &decls {
            let invalid = |reason: String| ParamError::Invalid {
                name: d.name.clone(),
                reason,
            };
            d.dist.validate(d.ty).map_err(invalid)?;
            if let Some(l) = limits.iter().find(|l| l.name == d.name) {
                let (lo, hi) = d.dist.bounds();
                let low_ok = if l.min_strict {
                    lo > l.min
                } else {
                    lo >= l.min
                };
                let high_ok = l.max.is_none_or(|m| hi <= m);
                if !low_ok || !high_ok {
                    let range = match l.max {
                        Some(m) => format!("[{}, {}]", l.min, m),
                        None if l.min_strict => format!("> {}", l.min),
                        None => format!(">= {}", l.min),
                    };
                    return Err(invalid(format!(
                        "{} leaves the allowed range {range}",
                        d.dist
                    )));
                }
            }
        }
        Ok(decls)
    }

    /// Source of the twin script.
    pub fn twin_source(self) -> &'static str {
        match self {
            Archetype::Random => include_str!("../../../../corpus/archetypes/random.avt"),
            Archetype::Momentum => include_str!("../../../../corpus/archetypes/momentum.avt"),
            Archetype::Oscillatory => {
                include_str!("../../../../corpus/archetypes/oscillatory.avt")
            }
            Archetype::Bollinger => include_str!("../../../../corpus/archetypes/bollinger.avt"),
            Archetype::VolumeSeeker => {
                include_str!("../../../../corpus/archetypes/volume_seeker.avt")
            }
        }
    }

    /// Native agent from a sampled parameter vector laid out as
    /// [`Archetype::schema`].
    pub fn build(self, params: &[Value]) -> NativeAgent {
        let r = |i: usize| params[i].as_f64().expect("numeric param");
        let n = |i: usize| params[i].as_i64().expect("int param");
        let rule = match self {
            Archetype::Random => Rule::Random {
                p_buy: r(0),
                sigma: r(1),
                qmax: n(2),
            },
            Archetype::Momentum => Rule::Momentum {
                lookback: n(0),
                threshold: r(1),
                q: n(2),
            },
            Archetype::Oscillatory => Rule::Oscillatory {
                period: n(0),
                q: n(1),
            },
            Archetype::Bollinger => Rule::Bollinger {
                window: n(0),
                k: r(1),
                q: n(2),
            },
            Archetype::VolumeSeeker => Rule::VolumeSeeker {
                window: n(0),
                multiplier: r(1),
                q: n(2),
            },
        };
        let base = params.len() - 2;
        NativeAgent {
            rule,
            wake_rate: r(base),
            news_sens: r(base + 1),
            cum_news: 0.0,
            n_obs: 0,
            vol_sum: 0,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    Random {
        p_buy: f64,
        sigma: f64,
        qmax: i64,
    },
    Momentum {
        lookback: i64,
        threshold: f64,
        q: i64,
    },
    Oscillatory {
        period: i64,
        q: i64,
    },
    Bollinger {
        window: i64,
        k: f64,
        q: i64,
    },
    VolumeSeeker {
        window: i64,
        multiplier: f64,
        q: i64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NativeAgent {
    pub rule: Rule,
    pub wake_rate: f64,
    pub news_sens: f64,
    cum_news: f64,
    n_obs: i64,
    vol_sum: i64,
}

/// Marketable limit order against the opposite best quote, if any.
fn take(side: Side, q: i64, view: &MarketView<'_>) -> Vec<Action> {
    let quote = match side {
        Side::Buy => view.best_ask,
        Side::Sell => view.best_bid,
    };
    quote
        .map(|price| Action::Limit {
            side,
            price,
            qty: q,
        })
        .into_iter()
        .collect()
}

pub fn random_decide(
    p_buy: f64,
    sigma: f64,
    qmax: i64,
    news_factor: f64,
    view: &MarketView<'_>,
    rng: &mut AgentRng,
) -> Vec<Action> {
    let side = if rng.uniform01() < p_buy {
        Side::Buy
    } else {
        Side::Sell
    };
    let eps = rng.uniform(-sigma, sigma);
    let qty = rng.uniform_int(1, qmax);
    let reference = view.mark_price() as f64 * news_factor;
    let price = (reference * (1.0 + eps)).round();
    if !(price.is_finite() && price.abs() < 9.0e18) {
        return Vec::new();
    }
    vec![
        Action::CancelAll,
        Action::Limit {
            side,
            price: price as i64,
            qty,
        },
    ]
}

pub fn momentum_decide(
    lookback: i64,
    threshold: f64,
    q: i64,
    view: &MarketView<'_>,
) -> Vec<Action> {
    match view.history.log_return(lookback) {
        Some(r) if r > threshold => take(Side::Buy, q, view),
        Some(r) if r < -threshold => take(Side::Sell, q, view),
        _ => Vec::new(),
    }
}

pub fn oscillatory_decide(period: i64, q: i64, view: &MarketView<'_>) -> Vec<Action> {
    let phase = (2 * view.time as i64).div_euclid(period).rem_euclid(2);
    if phase == 0 {
        take(Side::Buy, q, view)
    } else {
        take(Side::Sell, q, view)
    }
}

pub fn bollinger_decide(window: i64, k: f64, q: i64, view: &MarketView<'_>) -> Vec<Action> {
    let (Some(m), Some(s)) = (view.history.sma(window), view.history.std(window)) else {
        return Vec::new();
    };
    if s <= 0.0 {
        return Vec::new();
    }
    let Some(last) = view.last_price() else {
        return Vec::new();
    };
    let last = last as f64;
    if last > m + k * s {
        take(Side::Sell, q, view)
    } else if last < m - k * s {
        take(Side::Buy, q, view)
    } else {
        Vec::new()
    }
}

/// Decision for one wake given the running volume mean from earlier wakes.
pub fn volume_seeker_decide(
    window: i64,
    multiplier: f64,
    q: i64,
    vbar: Option<f64>,
    view: &MarketView<'_>,
) -> Vec<Action> {
    let (Some(v), Some(vbar)) = (view.history.volume(window), vbar) else {
        return Vec::new();
    };
    if !(vbar > 0.0 && v as f64 > multiplier * vbar) {
        return Vec::new();
    }
    match view.history.log_return(1) {
        Some(r) if r > 0.0 => take(Side::Buy, q, view),
        Some(r) if r < 0.0 => take(Side::Sell, q, view),
        _ => Vec::new(),
    }
}

impl Behavior for NativeAgent {
    fn handles(&self, kind: EventKind) -> bool {
        match kind {
            EventKind::Wake => true,
            EventKind::News => matches!(self.rule, Rule::Random { .. }),
            EventKind::Trade | EventKind::Message => false,
        }
    }

    fn wake_rate(&self) -> f64 {
        self.wake_rate
    }

    fn on_event(
        &mut self,
        event: &AgentEvent,
        view: &MarketView<'_>,
        rng: &mut AgentRng,
    ) -> Result<Vec<Action>, EvalError> {
        if let AgentEvent::News(v) = *event {
            if matches!(self.rule, Rule::Random { .. }) {
                self.cum_news += v;
            }
            return Ok(Vec::new());
        }
        if *event != AgentEvent::Wake {
            return Ok(Vec::new());
        }
        Ok(match self.rule {
            Rule::Random { p_buy, sigma, qmax } => {
                let factor = (self.news_sens * self.cum_news).exp();
                random_decide(p_buy, sigma, qmax, factor, view, rng)
            }
            Rule::Momentum {
                lookback,
                threshold,
                q,
            } => momentum_decide(lookback, threshold, q, view),
            Rule::Oscillatory { period, q } => oscillatory_decide(period, q, view),
            Rule::Bollinger { window, k, q } => bollinger_decide(window, k, q, view),
            Rule::VolumeSeeker {
                window,
                multiplier,
                q,
            } => {
                let vbar = (self.n_obs > 0).then(|| self.vol_sum as f64 / self.n_obs as f64);
                let out = volume_seeker_decide(window, multiplier, q, vbar, view);
                if let Some(v) = view.history.volume(window) {
                    self.n_obs += 1;
                    self.vol_sum += v;
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::PriceHistory;

    fn view<'a>(
        h: &'a PriceHistory,
        bid: Option<i64>,
        ask: Option<i64>,
        time: u64,
    ) -> MarketView<'a> {
        MarketView {
            time,
            best_bid: bid,
            best_ask: ask,
            initial_price: 1000,
            agent_id: 0,
            agent_count: 1,
            cash: 0,
            shares: 0,
            history: h,
        }
    }

    fn hist(p: &[i64]) -> PriceHistory {
        PriceHistory::from_series(p.to_vec(), vec![1; p.len()])
    }

    #[test]
    fn random_always_buys_when_p_is_one() {
        let h = PriceHistory::new();
        let mut rng = AgentRng::from_seed(1);
        for _ in 0..200 {
            let a = random_decide(1.0, 0.05, 10, 1.0, &view(&h, None, None, 0), &mut rng);
            assert!(matches!(
                a[1],
                Action::Limit {
                    side: Side::Buy,
                    ..
                }
            ));
        }
    }

    #[test]
    fn random_zero_spread_quotes_reference() {
        let h = PriceHistory::new();
        let mut rng = AgentRng::from_seed(2);
        let a = random_decide(0.5, 0.0, 3, 1.0, &view(&h, None, None, 0), &mut rng);
        let Action::Limit { price, qty, .. } = a[1] else {
            panic!()
        };
        assert_eq!(price, 1000);
        assert!((1..=3).contains(&qty));
    }

    #[test]
    fn random_reproducible() {
        let h = hist(&[990]);
        let run = |seed| {
            let mut rng = AgentRng::from_seed(seed);
            (0..50)
                .flat_map(|_| random_decide(0.5, 0.02, 10, 1.0, &view(&h, None, None, 0), &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn momentum_rules() {
        let flat = hist(&[100; 12]);
        assert!(momentum_decide(10, 0.01, 5, &view(&flat, Some(99), Some(101), 0)).is_empty());
        let up = hist(&[100, 101, 102, 103, 104, 105]);
        assert_eq!(
            momentum_decide(5, 0.01, 5, &view(&up, Some(104), Some(106), 0)),
            vec![Action::Limit {
                side: Side::Buy,
                price: 106,
                qty: 5
            }]
        );
        assert!(momentum_decide(10, 0.01, 5, &view(&up, Some(104), Some(106), 0)).is_empty());
    }

    #[test]
    fn oscillatory_phases() {
        let h = PriceHistory::new();
        let t = 1000;
        assert_eq!(
            oscillatory_decide(t, 2, &view(&h, Some(9), Some(11), 0)),
            vec![Action::Limit {
                side: Side::Buy,
                price: 11,
                qty: 2
            }]
        );
        assert_eq!(
            oscillatory_decide(t, 2, &view(&h, Some(9), Some(11), 500)),
            vec![Action::Limit {
                side: Side::Sell,
                price: 9,
                qty: 2
            }]
        );
        assert!(oscillatory_decide(t, 2, &view(&h, Some(9), None, 0)).is_empty());
    }

    #[test]
    fn bollinger_rules() {
        let flat = hist(&[100; 5]);
        assert!(bollinger_decide(5, 1.0, 1, &view(&flat, Some(99), Some(101), 0)).is_empty());
        // mean 104, population std 8, upper band 112 < 120
        let spike = hist(&[100, 100, 100, 100, 120]);
        assert_eq!(
            bollinger_decide(5, 1.0, 1, &view(&spike, Some(118), Some(121), 0)),
            vec![Action::Limit {
                side: Side::Sell,
                price: 118,
                qty: 1
            }]
        );
        let inside = hist(&[100, 102, 98, 101, 99]);
        assert!(bollinger_decide(5, 2.0, 1, &view(&inside, Some(98), Some(100), 0)).is_empty());
    }

    #[test]
    fn volume_seeker_rules() {
        let empty = PriceHistory::new();
        assert!(volume_seeker_decide(1, 2.0, 1, None, &view(&empty, None, None, 0)).is_empty());
        let up = PriceHistory::from_series(vec![100, 101], vec![1, 3]);
        assert_eq!(
            volume_seeker_decide(1, 2.0, 1, Some(1.0), &view(&up, Some(100), Some(102), 0)),
            vec![Action::Limit {
                side: Side::Buy,
                price: 102,
                qty: 1
            }]
        );
        let flat = PriceHistory::from_series(vec![100, 100], vec![1, 3]);
        assert!(
            volume_seeker_decide(1, 2.0, 1, Some(1.0), &view(&flat, Some(99), Some(101), 0))
                .is_empty()
        );
    }

    #[test]
    fn configure_checks_ranges() {
        let mut o = BTreeMap::new();
        o.insert("p_buy".to_string(), Distribution::Uniform(0.2, 0.8));
        assert!(Archetype::Random.configure(&o).is_ok());
        o.insert("p_buy".to_string(), Distribution::Uniform(0.2, 1.8));
        assert!(Archetype::Random.configure(&o).is_err());
        let mut o = BTreeMap::new();
        o.insert("nope".to_string(), real(1.0));
        assert_eq!(
            Archetype::Momentum.configure(&o),
            Err(ParamError::Unknown("nope".into()))
        );
        let mut o = BTreeMap::new();
        o.insert("multiplier".to_string(), real(1.0));
        assert!(Archetype::VolumeSeeker.configure(&o).is_err());
    }
}
