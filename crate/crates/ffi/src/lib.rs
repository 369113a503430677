//! C ABI for the avatar market.
//!
//! Every fallible function returns an [`AmStatus`]. On failure a message
//! is kept per thread and can be read with [`am_last_error`]. Handles are
//! opaque; each handle made by `am_scenario_from_json`, `am_scenario_load`
//! or `am_run` must be released with its matching `*_free` function.
//! Strings returned through out-parameters are
//! owned by the caller and released with [`am_string_free`].

use avatar_market::analytics::report_for;
use avatar_market::archive::write_archive;
use avatar_market::dsl;
use avatar_market::kernel::{self, RunError, RunResult, ScenarioConfig};
use avatar_market::market::Side;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    AvatarError = 4,
    EngineError = 5,
    IoError = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A validated scenario.
pub struct AmScenario {
    config: ScenarioConfig,
}

/// The outcome of one run.
pub struct AmRun {
    result: RunResult,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AmTrade {
    pub trade_id: u64,
    pub time: u64,
    pub price: i64,
    pub qty: i64,
    pub buy_agent: u32,
    pub sell_agent: u32,
    /// 0 when the buyer was the aggressor, 1 for the seller.
    pub aggressor: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: AmStatus, msg: impl Into<String>) -> AmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AmStatus) -> AmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AmStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, AmStatus> {
    if p.is_null() {
        return Err(fail(AmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn run_status(e: &RunError) -> AmStatus {
    match e {
        RunError::Config(_) => AmStatus::ConfigError,
        RunError::Avatar { .. } => AmStatus::AvatarError,
        RunError::Engine(_) => AmStatus::EngineError,
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn am_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn am_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn am_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn finish_scenario(
    mut config: ScenarioConfig,
    base: Option<&Path>,
    out: *mut *mut AmScenario,
) -> AmStatus {
    if let Some(base) = base {
        if let Err(e) = config.inline_files(base) {
            return fail(AmStatus::ConfigError, e.to_string());
        }
    }
    if let Err(e) = config.validate() {
        return fail(AmStatus::ConfigError, e.to_string());
    }
    unsafe { *out = Box::into_raw(Box::new(AmScenario { config })) };
    AmStatus::Ok
}

/// Parses a scenario from JSON text. `base_dir` resolves `avatar_file`
/// references and may be null when the scenario has none.
///
/// # Safety
/// `json` must be a valid string, `base_dir` null or a valid string, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut AmScenario,
) -> AmStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmStatus::NullPointer, "out is null");
        }
        let text = match read_str(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            None
        } else {
            match read_str(base_dir, "base_dir") {
                Ok(b) => Some(Path::new(b)),
                Err(s) => return s,
            }
        };
        match ScenarioConfig::from_json(text) {
            Ok(c) => finish_scenario(c, base, out),
            Err(e) => fail(AmStatus::ConfigError, e.to_string()),
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a valid string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_load(
    path: *const c_char,
    out: *mut *mut AmScenario,
) -> AmStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmStatus::NullPointer, "out is null");
        }
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ScenarioConfig::load(Path::new(path)) {
            Ok(c) => finish_scenario(c, None, out),
            Err(e) => fail(AmStatus::ConfigError, e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_set_seed(scenario: *mut AmScenario, seed: u64) -> AmStatus {
    guard(|| match scenario.as_mut() {
        Some(s) => {
            s.config.master_seed = seed;
            AmStatus::Ok
        }
        None => fail(AmStatus::NullPointer, "scenario is null"),
    })
}

/// # Safety
/// `scenario` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn am_scenario_free(scenario: *mut AmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a scenario to completion.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_run(scenario: *const AmScenario, out: *mut *mut AmRun) -> AmStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(AmStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(AmStatus::NullPointer, "out is null");
        }
        match kernel::run(&s.config) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(AmRun { result }));
                AmStatus::Ok
            }
            Err(e) => fail(run_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `run` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn am_run_free(run: *mut AmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of trades on the tape, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn am_run_trade_count(run: *const AmRun) -> u64 {
    run.as_ref().map_or(0, |r| r.result.tape.len() as u64)
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_run_trade(
    run: *const AmRun,
    index: u64,
    out: *mut AmTrade,
) -> AmStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(AmStatus::NullPointer, "run or out is null");
        };
        let Some(t) = usize::try_from(index)
            .ok()
            .and_then(|i| r.result.tape.get(i))
        else {
            return fail(
                AmStatus::OutOfRange,
                format!("trade {index} of {}", r.result.tape.len()),
            );
        };
        *out = AmTrade {
            trade_id: t.trade_id,
            time: t.time,
            price: t.price,
            qty: t.qty,
            buy_agent: t.buy_agent,
            sell_agent: t.sell_agent,
            aggressor: match t.aggressor_side {
                Side::Buy => 0,
                Side::Sell => 1,
            },
        };
        AmStatus::Ok
    })
}

/// Copies up to `capacity` trade prices into `buf` and stores the number
/// copied in `written`.
///
/// # Safety
/// `run` must be a live handle, `buf` valid for `capacity` writes and
/// `written` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_run_prices(
    run: *const AmRun,
    buf: *mut i64,
    capacity: usize,
    written: *mut usize,
) -> AmStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(AmStatus::NullPointer, "run is null");
        };
        if written.is_null() || (buf.is_null() && capacity > 0) {
            return fail(AmStatus::NullPointer, "buf or written is null");
        }
        let n = capacity.min(r.result.tape.len());
        for (i, t) in r.result.tape.iter().take(n).enumerate() {
            *buf.add(i) = t.price;
        }
        *written = n;
        AmStatus::Ok
    })
}

/// Final `(cash, shares)` of one agent.
///
/// # Safety
/// `run` must be a live handle; `cash` and `shares` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn am_run_account(
    run: *const AmRun,
    agent: u32,
    cash: *mut i64,
    shares: *mut i64,
) -> AmStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(AmStatus::NullPointer, "run is null");
        };
        if cash.is_null() || shares.is_null() {
            return fail(AmStatus::NullPointer, "cash or shares is null");
        }
        match r.result.final_accounts.get(agent as usize) {
            Some(&(c, s)) => {
                *cash = c;
                *shares = s;
                AmStatus::Ok
            }
            None => fail(AmStatus::OutOfRange, format!("agent {agent}")),
        }
    })
}

/// The stylized-facts report as JSON.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_run_report_json(
    run: *const AmRun,
    max_lag: usize,
    out: *mut *mut c_char,
) -> AmStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(AmStatus::NullPointer, "run or out is null");
        };
        *out = into_c_string(report_for(&r.result, max_lag).to_json());
        AmStatus::Ok
    })
}

/// Writes tape, snapshots, config and report into `dir`.
///
/// # Safety
/// `run` must be a live handle and `dir` a valid string.
#[no_mangle]
pub unsafe extern "C" fn am_run_write_archive(
    run: *const AmRun,
    dir: *const c_char,
    max_lag: usize,
) -> AmStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(AmStatus::NullPointer, "run is null");
        };
        let dir = match read_str(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match write_archive(Path::new(dir), &r.result, max_lag) {
            Ok(_) => AmStatus::Ok,
            Err(e) => fail(AmStatus::IoError, e.to_string()),
        }
    })
}

/// Checks an avatar script. On success `canonical` receives the printed
/// form; on failure the error (with line and column) is in [`am_last_error`].
///
/// # Safety
/// `source` must be a valid string; `canonical` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn am_avatar_check(
    source: *const c_char,
    canonical: *mut *mut c_char,
) -> AmStatus {
    guard(|| {
        let src = match read_str(source, "source") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match dsl::parse(src) {
            Ok(p) => {
                if !canonical.is_null() {
                    *canonical = into_c_string(dsl::print(&p.spec));
                }
                AmStatus::Ok
            }
            Err(e) => fail(AmStatus::AvatarError, e.to_string()),
        }
    })
}
