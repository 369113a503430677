//! Return statistics and the run report.

mod report;
mod stats;

pub use report::{
    build_report, family_wealth, leaderboard, relative_wealth, report_for, FamilyHoldings,
    FamilyLine, FamilySeries, LeaderboardEntry, Panel, Reason, ReturnDistribution, RunData,
    StylizedFactsReport, DEFAULT_MAX_LAG, QQ_POINTS,
};
pub use stats::{acf, excess_kurtosis, log_returns, qq_data, StatsError};
