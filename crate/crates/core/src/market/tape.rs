//! Trade tape CSV: `trade_id,time,price,qty,buy_agent,sell_agent,aggressor`.

use super::{Side, Trade};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const HEADER: [&str; 7] = [
    "trade_id",
    "time",
    "price",
    "qty",
    "buy_agent",
    "sell_agent",
    "aggressor",
];

/// Row layout of the tape file. Order ids are not exported.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeRow {
    pub trade_id: u64,
    pub time: u64,
    pub price: i64,
    pub qty: i64,
    pub buy_agent: u32,
    pub sell_agent: u32,
    pub aggressor: Side,
}

impl From<&Trade> for TapeRow {
    fn from(t: &Trade) -> Self {
        TapeRow {
            trade_id: t.trade_id,
            time: t.time,
            price: t.price,
            qty: t.qty,
            buy_agent: t.buy_agent,
            sell_agent: t.sell_agent,
            aggressor: t.aggressor_side,
        }
    }
}

pub fn write_tape<W: Write>(out: W, trades: &[Trade]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(HEADER)?;
    for t in trades {
        w.serialize(TapeRow::from(t))?;
    }
    w.flush()?;
    Ok(())
}

pub fn tape_to_string(trades: &[Trade]) -> String {
    let mut buf = Vec::new();
    write_tape(&mut buf, trades).expect("in-memory write");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_tape<R: Read>(input: R) -> csv::Result<Vec<TapeRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected tape header: {:?}", headers),
        )));
    }
    r.deserialize().collect()
}
