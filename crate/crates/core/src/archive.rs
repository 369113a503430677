//! On-disk run archive: a directory holding `tape.csv`, `snapshots.csv`,
//! `config.json` and `report.json`.

use crate::analytics::{build_report, RunData, StylizedFactsReport};
use crate::kernel::{initial_holdings, FamilyInfo, RunResult, RunStats, ScenarioConfig, Snapshot};
use crate::market::tape::{read_tape, write_tape, TapeRow};
use crate::market::Price;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TAPE_FILE: &str = "tape.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";

const SNAPSHOT_HEADER: [&str; 7] = [
    "snapshot",
    "trade_index",
    "time",
    "mark_price",
    "agent_id",
    "cash",
    "shares",
];

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Format { file: &'static str, message: String },
    #[error("archive is inconsistent: {0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(file: &'static str) -> impl Fn(String) -> ArchiveError {
    move |message| ArchiveError::Format { file, message }
}

/// Contents of `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub families: Vec<FamilyInfo>,
    pub stats: RunStats,
    pub max_lag: usize,
}

#[derive(Serialize, Deserialize)]
struct SnapshotRow {
    snapshot: usize,
    trade_index: u64,
    time: u64,
    mark_price: i64,
    agent_id: usize,
    cash: i64,
    shares: i64,
}

fn write_snapshots<W: Write>(out: W, snapshots: &[Snapshot]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SNAPSHOT_HEADER)?;
    for (i, s) in snapshots.iter().enumerate() {
        for (a, &(cash, shares)) in s.holdings.iter().enumerate() {
            w.serialize(SnapshotRow {
                snapshot: i,
                trade_index: s.trade_index,
                time: s.time,
                mark_price: s.mark_price,
                agent_id: a,
                cash,
                shares,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, ArchiveError> {
    let fmt = format_err(SNAPSHOTS_FILE);
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path).map_err(io_err(path))?));
    let headers = r.headers().map_err(|e| fmt(e.to_string()))?.clone();
    if headers.iter().ne(SNAPSHOT_HEADER.iter().copied()) {
        return Err(fmt(format!("unexpected header {:?}", headers)));
    }
    let mut out: Vec<Snapshot> = Vec::new();
    for row in r.deserialize::<SnapshotRow>() {
        let row = row.map_err(|e| fmt(e.to_string()))?;
        if row.snapshot == out.len() {
            out.push(Snapshot {
                trade_index: row.trade_index,
                time: row.time,
                mark_price: row.mark_price,
                holdings: Vec::new(),
            });
        }
        if row.snapshot + 1 != out.len() {
            return Err(fmt(format!("snapshot {} out of order", row.snapshot)));
        }
        let s = out.last_mut().expect("pushed above");
        if (s.trade_index, s.time, s.mark_price) != (row.trade_index, row.time, row.mark_price)
            || row.agent_id != s.holdings.len()
        {
            return Err(fmt(format!(
                "snapshot {} has inconsistent rows",
                row.snapshot
            )));
        }
        s.holdings.push((row.cash, row.shares));
    }
    Ok(out)
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), ArchiveError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes all four archive files for `result` and returns the report.
pub fn write_archive(
    dir: &Path,
    result: &RunResult,
    max_lag: usize,
) -> Result<StylizedFactsReport, ArchiveError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report = crate::analytics::report_for(result, max_lag);
    let config = RunConfig {
        scenario: result.scenario.clone(),
        families: result.families.clone(),
        stats: result.stats.clone(),
        max_lag,
    };
    write_file(&dir.join(TAPE_FILE), |w| {
        write_tape(w, &result.tape).map_err(std::io::Error::other)
    })?;
    write_file(&dir.join(SNAPSHOTS_FILE), |w| {
        write_snapshots(w, &result.snapshots).map_err(std::io::Error::other)
    })?;
    write_file(&dir.join(CONFIG_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &config)?;
        w.write_all(b"\n")
    })?;
    write_file(&dir.join(REPORT_FILE), |w| {
        w.write_all(report.to_json().as_bytes())
    })?;
    Ok(report)
}

/// A loaded archive. Loading does not check consistency; see
/// [`Archive::verify`].
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub config: RunConfig,
    pub tape: Vec<TapeRow>,
    pub snapshots: Vec<Snapshot>,
}

impl Archive {
    pub fn load(dir: &Path) -> Result<Self, ArchiveError> {
        let path = dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| format_err(CONFIG_FILE)(e.to_string()))?;
        let path = dir.join(TAPE_FILE);
        let tape = read_tape(BufReader::new(File::open(&path).map_err(io_err(&path))?))
            .map_err(|e| format_err(TAPE_FILE)(e.to_string()))?;
        let snapshots = read_snapshots(&dir.join(SNAPSHOTS_FILE))?;
        Ok(Archive {
            config,
            tape,
            snapshots,
        })
    }

    pub fn prices(&self) -> Vec<Price> {
        self.tape.iter().map(|t| t.price).collect()
    }

    /// Replays the tape from the initial endowments and checks every
    /// snapshot against it.
    pub fn verify(&self) -> Result<(), ArchiveError> {
        let bad = |m: String| Err(ArchiveError::Inconsistent(m));
        let families = &self.config.families;
        let mut holdings = initial_holdings(families);
        let n_agents = holdings.len();
        let mut last_time = 0;
        for (i, t) in self.tape.iter().enumerate() {
            if t.trade_id != i as u64 + 1 {
                return bad(format!("row {} has trade_id {}", i + 1, t.trade_id));
            }
            if t.time < last_time {
                return bad(format!("trade {} goes back in time", t.trade_id));
            }
            last_time = t.time;
            if t.price < 1 || t.qty < 1 {
                return bad(format!(
                    "trade {} has non-positive price or quantity",
                    t.trade_id
                ));
            }
            if t.buy_agent as usize >= n_agents || t.sell_agent as usize >= n_agents {
                return bad(format!("trade {} names an unknown agent", t.trade_id));
            }
        }
        let expected = self.expected_indices();
        let got: Vec<u64> = self.snapshots.iter().map(|s| s.trade_index).collect();
        if got != expected {
            return bad(format!("snapshot indices {got:?} do not match the tape"));
        }
        let mut applied = 0usize;
        for s in &self.snapshots {
            let k = s.trade_index as usize;
            for t in &self.tape[applied..k] {
                let value = t.price.checked_mul(t.qty).ok_or_else(|| {
                    ArchiveError::Inconsistent(format!("trade {} overflows", t.trade_id))
                })?;
                let b = &mut holdings[t.buy_agent as usize];
                b.0 -= value;
                b.1 += t.qty;
                let sl = &mut holdings[t.sell_agent as usize];
                sl.0 += value;
                sl.1 -= t.qty;
            }
            applied = k;
            let (time, mark) = match k {
                0 => (0, self.config.scenario.initial_reference_price),
                _ => (self.tape[k - 1].time, self.tape[k - 1].price),
            };
            if s.time != time || s.mark_price != mark {
                return bad(format!(
                    "snapshot at trade {k} has the wrong time or mark price"
                ));
            }
            if s.holdings != holdings {
                return bad(format!(
                    "holdings at trade {k} differ from the replayed tape"
                ));
            }
        }
        Ok(())
    }

    fn expected_indices(&self) -> Vec<u64> {
        let n = self.tape.len() as u64;
        let step = self.config.scenario.snapshot_interval.max(1);
        let mut v: Vec<u64> = (0..=n / step).map(|j| j * step).collect();
        if *v.last().expect("non-empty") != n {
            v.push(n);
        }
        v
    }

    pub fn report(&self) -> StylizedFactsReport {
        let prices = self.prices();
        build_report(
            RunData::new(&self.config.families, &prices, &self.snapshots),
            self.config.max_lag,
        )
    }
}

/// Verifies the archive, rebuilds its report and compares the result
/// with the stored `report.json`.
pub fn regenerate(dir: &Path) -> Result<StylizedFactsReport, ArchiveError> {
    let archive = Archive::load(dir)?;
    archive.verify()?;
    let report = archive.report();
    let path = dir.join(REPORT_FILE);
    let stored = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    if stored != report.to_json() {
        return Err(ArchiveError::Inconsistent(
            "regenerated report differs from report.json".into(),
        ));
    }
    Ok(report)
}
