use super::stats::{acf, excess_kurtosis, log_returns, qq_data, StatsError};
use crate::kernel::{FamilyInfo, RunResult, Snapshot};
use crate::market::Price;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io;
use std::path::Path;

pub const DEFAULT_MAX_LAG: usize = 50;
pub const QQ_POINTS: usize = 99;

/// Why a panel carries no data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    EmptySeries,
    ZeroVariance,
    InsufficientData,
    BadInput,
    NoSnapshots,
    ZeroWealth,
    Withheld,
}

impl From<StatsError> for Reason {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::EmptySeries => Reason::EmptySeries,
            StatsError::ZeroVariance => Reason::ZeroVariance,
            StatsError::InsufficientData => Reason::InsufficientData,
            StatsError::BadInput => Reason::BadInput,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Panel<T> {
    Ok { data: T },
    Null { reason: Reason },
}

impl<T> Panel<T> {
    pub fn data(&self) -> Option<&T> {
        match self {
            Panel::Ok { data } => Some(data),
            Panel::Null { .. } => None,
        }
    }

    pub fn reason(&self) -> Option<Reason> {
        match self {
            Panel::Ok { .. } => None,
            Panel::Null { reason } => Some(*reason),
        }
    }

    fn from_result<E: Into<Reason>>(r: Result<T, E>) -> Self {
        match r {
            Ok(data) => Panel::Ok { data },
            Err(e) => Panel::Null { reason: e.into() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnDistribution {
    pub excess_kurtosis: f64,
    /// `(standard normal quantile, empirical quantile)` pairs.
    pub qq: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyLine<T> {
    pub family_id: u32,
    pub name: String,
    pub values: Vec<T>,
}

/// One value per family per snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySeries<T> {
    pub trade_index: Vec<u64>,
    pub families: Vec<FamilyLine<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: u32,
    pub family_id: u32,
    pub name: String,
    pub strategy: String,
    pub n_agents: u32,
    pub wealth: i128,
    pub average_wealth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactsReport {
    pub transactions: u64,
    pub returns: u64,
    pub max_lag: usize,
    pub noise_band: Option<f64>,
    /// (a) autocorrelation of raw returns, lags `0..=max_lag`.
    pub acf_raw: Panel<Vec<f64>>,
    /// (a) autocorrelation of absolute returns.
    pub acf_abs: Panel<Vec<f64>>,
    /// (b) tail shape and normality plot data.
    pub distribution: Panel<ReturnDistribution>,
    /// (c) price per transaction tick.
    pub price: Panel<Vec<Price>>,
    /// (d) family share of total wealth.
    pub relative_wealth: Panel<FamilySeries<f64>>,
    /// (e) shares held per family.
    pub stocks: Panel<FamilySeries<i64>>,
    /// (f) cash held per family.
    pub cash: Panel<FamilySeries<i64>>,
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Everything the report depends on. It can be assembled from a live
/// [`RunResult`] or from an archive on disk.
#[derive(Clone, Copy, Debug)]
pub struct RunData<'a> {
    pub families: &'a [FamilyInfo],
    pub prices: &'a [Price],
    pub snapshots: &'a [Snapshot],
}

/// Per-family holdings at one snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyHoldings {
    pub cash: i64,
    pub shares: i64,
    pub wealth: i128,
}

/// `cash + shares * mark` summed over each family's members.
pub fn family_wealth(families: &[FamilyInfo], snapshot: &Snapshot) -> Vec<FamilyHoldings> {
    let mark = snapshot.mark_price as i128;
    families
        .iter()
        .map(|f| {
            let mut h = FamilyHoldings {
                cash: 0,
                shares: 0,
                wealth: 0,
            };
            for &(c, s) in &snapshot.holdings[f.agents()] {
                h.cash += c;
                h.shares += s;
                h.wealth += c as i128 + s as i128 * mark;
            }
            h
        })
        .collect()
}

/// Each family's share of total wealth; `None` if total wealth is zero.
pub fn relative_wealth(holdings: &[FamilyHoldings]) -> Option<Vec<f64>> {
    let total: i128 = holdings.iter().map(|h| h.wealth).sum();
    if total == 0 {
        return None;
    }
    Some(
        holdings
            .iter()
            .map(|h| h.wealth as f64 / total as f64)
            .collect(),
    )
}

/// Families ranked by average wealth at the final snapshot, highest
/// first; ties go to the lower family id. Averages are compared exactly.
pub fn leaderboard(families: &[FamilyInfo], last: &Snapshot) -> Vec<LeaderboardEntry> {
    let h = family_wealth(families, last);
    let mut order: Vec<usize> = (0..families.len()).collect();
    order.sort_by(|&a, &b| {
        let lhs = h[a].wealth * families[b].n_agents as i128;
        let rhs = h[b].wealth * families[a].n_agents as i128;
        match rhs.cmp(&lhs) {
            Ordering::Equal => families[a].family_id.cmp(&families[b].family_id),
            o => o,
        }
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            let f = &families[i];
            LeaderboardEntry {
                rank: rank as u32 + 1,
                family_id: f.family_id,
                name: f.name.clone(),
                strategy: f.strategy.clone(),
                n_agents: f.n_agents,
                wealth: h[i].wealth,
                average_wealth: h[i].wealth as f64 / f.n_agents as f64,
            }
        })
        .collect()
}

fn family_series<T>(
    families: &[FamilyInfo],
    snapshots: &[Snapshot],
    per_snapshot: &[Vec<T>],
) -> FamilySeries<T>
where
    T: Copy,
{
    FamilySeries {
        trade_index: snapshots.iter().map(|s| s.trade_index).collect(),
        families: families
            .iter()
            .enumerate()
            .map(|(i, f)| FamilyLine {
                family_id: f.family_id,
                name: f.name.clone(),
                values: per_snapshot.iter().map(|row| row[i]).collect(),
            })
            .collect(),
    }
}

pub fn build_report(data: RunData<'_>, max_lag: usize) -> StylizedFactsReport {
    let returns = log_returns(data.prices);
    let n = returns.as_ref().map_or(0, |r| r.len());
    let (acf_raw, acf_abs, distribution) = match &returns {
        Ok(r) => {
            let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
            let dist = excess_kurtosis(r).and_then(|k| {
                Ok(ReturnDistribution {
                    excess_kurtosis: k,
                    qq: qq_data(r, QQ_POINTS)?,
                })
            });
            (
                Panel::from_result(acf(r, max_lag)),
                Panel::from_result(acf(&abs, max_lag)),
                Panel::from_result(dist),
            )
        }
        Err(e) => (
            Panel::Null {
                reason: (*e).into(),
            },
            Panel::Null {
                reason: (*e).into(),
            },
            Panel::Null {
                reason: (*e).into(),
            },
        ),
    };
    let price = if data.prices.is_empty() {
        Panel::Null {
            reason: Reason::EmptySeries,
        }
    } else {
        Panel::Ok {
            data: data.prices.to_vec(),
        }
    };

    let holdings: Vec<Vec<FamilyHoldings>> = data
        .snapshots
        .iter()
        .map(|s| family_wealth(data.families, s))
        .collect();
    let no_snapshots = || Panel::Null {
        reason: Reason::NoSnapshots,
    };
    let (relative_wealth_panel, stocks, cash, board) = if data.snapshots.is_empty() {
        (
            no_snapshots(),
            Panel::Null {
                reason: Reason::NoSnapshots,
            },
            Panel::Null {
                reason: Reason::NoSnapshots,
            },
            Vec::new(),
        )
    } else {
        let rel: Option<Vec<Vec<f64>>> = holdings.iter().map(|h| relative_wealth(h)).collect();
        let rel = match rel {
            Some(rows) => Panel::Ok {
                data: family_series(data.families, data.snapshots, &rows),
            },
            None => Panel::Null {
                reason: Reason::ZeroWealth,
            },
        };
        let shares: Vec<Vec<i64>> = holdings
            .iter()
            .map(|h| h.iter().map(|x| x.shares).collect())
            .collect();
        let cash: Vec<Vec<i64>> = holdings
            .iter()
            .map(|h| h.iter().map(|x| x.cash).collect())
            .collect();
        (
            rel,
            Panel::Ok {
                data: family_series(data.families, data.snapshots, &shares),
            },
            Panel::Ok {
                data: family_series(data.families, data.snapshots, &cash),
            },
            leaderboard(data.families, data.snapshots.last().expect("non-empty")),
        )
    };

    StylizedFactsReport {
        transactions: data.prices.len() as u64,
        returns: n as u64,
        max_lag,
        noise_band: (n > 0).then(|| 2.0 / (n as f64).sqrt()),
        acf_raw,
        acf_abs,
        distribution,
        price,
        relative_wealth: relative_wealth_panel,
        stocks,
        cash,
        leaderboard: board,
    }
}

impl<'a> RunData<'a> {
    pub fn new(families: &'a [FamilyInfo], prices: &'a [Price], snapshots: &'a [Snapshot]) -> Self {
        RunData {
            families,
            prices,
            snapshots,
        }
    }
}

/// Report for a finished run. Prices are taken from the tape.
pub fn report_for(result: &RunResult, max_lag: usize) -> StylizedFactsReport {
    let prices = result.prices();
    build_report(
        RunData::new(&result.families, &prices, &result.snapshots),
        max_lag,
    )
}

impl StylizedFactsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Removes the panels derived from private holdings.
    pub fn public_only(mut self) -> Self {
        self.stocks = Panel::Null {
            reason: Reason::Withheld,
        };
        self.cash = Panel::Null {
            reason: Reason::Withheld,
        };
        self
    }

    /// One CSV per panel plus the leaderboard.
    pub fn write_csvs(&self, dir: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(dir.join("acf.csv"))?;
        w.write_record(["lag", "acf_raw", "acf_abs"])?;
        let raw = self.acf_raw.data();
        let abs = self.acf_abs.data();
        for lag in 0..=self.max_lag {
            let get = |p: Option<&Vec<f64>>| {
                p.and_then(|v| v.get(lag))
                    .map(|x| format!("{x:?}"))
                    .unwrap_or_default()
            };
            if raw.is_none() && abs.is_none() {
                break;
            }
            w.write_record([lag.to_string(), get(raw), get(abs)])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("qq.csv"))?;
        w.write_record(["normal_quantile", "empirical_quantile"])?;
        if let Some(d) = self.distribution.data() {
            for (a, b) in &d.qq {
                w.write_record([format!("{a:?}"), format!("{b:?}")])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("price.csv"))?;
        w.write_record(["trade_index", "price"])?;
        if let Some(p) = self.price.data() {
            for (i, x) in p.iter().enumerate() {
                w.write_record([(i + 1).to_string(), x.to_string()])?;
            }
        }
        w.flush()?;

        write_series(
            &dir.join("relative_wealth.csv"),
            &self.relative_wealth,
            |x| format!("{x:?}"),
        )?;
        write_series(&dir.join("stocks.csv"), &self.stocks, |x| x.to_string())?;
        write_series(&dir.join("cash.csv"), &self.cash, |x| x.to_string())?;

        let mut w = csv::Writer::from_path(dir.join("leaderboard.csv"))?;
        w.write_record([
            "rank",
            "family_id",
            "name",
            "strategy",
            "n_agents",
            "wealth",
            "average_wealth",
        ])?;
        for e in &self.leaderboard {
            w.write_record([
                e.rank.to_string(),
                e.family_id.to_string(),
                e.name.clone(),
                e.strategy.clone(),
                e.n_agents.to_string(),
                e.wealth.to_string(),
                format!("{:?}", e.average_wealth),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn write_series<T>(
    path: &Path,
    panel: &Panel<FamilySeries<T>>,
    fmt: impl Fn(&T) -> String,
) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let Some(s) = panel.data() else {
        w.write_record(["trade_index"])?;
        return w.flush();
    };
    let mut header = vec!["trade_index".to_string()];
    header.extend(s.families.iter().map(|f| f.name.clone()));
    w.write_record(&header)?;
    for (row, idx) in s.trade_index.iter().enumerate() {
        let mut rec = vec![idx.to_string()];
        rec.extend(s.families.iter().map(|f| fmt(&f.values[row])));
        w.write_record(&rec)?;
    }
    w.flush()
}
