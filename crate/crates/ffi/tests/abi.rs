use avatar_market_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

const SCENARIO: &str = r#"{
  "families": [
    {"name": "noise", "strategy": {"archetype": {"kind": "random"}},
     "n_agents": 20, "initial_cash": 1000000, "initial_shares": 100}
  ],
  "initial_reference_price": 1000,
  "run_length": {"transactions": 500},
  "master_seed": 4
}"#;

fn last_error() -> String {
    let p = am_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(json: &str) -> *mut AmScenario {
    let json = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { am_scenario_from_json(json.as_ptr(), ptr::null(), &mut s) },
        AmStatus::Ok
    );
    s
}

fn run(s: *const AmScenario) -> *mut AmRun {
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { am_run(s, &mut r) },
        AmStatus::Ok,
        "{}",
        last_error()
    );
    r
}

fn tape(r: *const AmRun) -> Vec<AmTrade> {
    let n = unsafe { am_run_trade_count(r) };
    (0..n)
        .map(|i| {
            let mut t = AmTrade::default();
            assert_eq!(unsafe { am_run_trade(r, i, &mut t) }, AmStatus::Ok);
            t
        })
        .collect()
}

#[test]
fn run_and_read_back() {
    let s = scenario(SCENARIO);
    let r = run(s);
    let trades = tape(r);
    assert!(trades.len() >= 500);
    assert_eq!(trades[0].trade_id, 1);

    let mut prices = vec![0i64; trades.len() + 5];
    let mut written = 0usize;
    assert_eq!(
        unsafe { am_run_prices(r, prices.as_mut_ptr(), prices.len(), &mut written) },
        AmStatus::Ok
    );
    assert_eq!(written, trades.len());
    assert!(trades.iter().zip(&prices).all(|(t, &p)| t.price == p));

    let (mut cash, mut shares) = (0i64, 0i64);
    let (mut total_cash, mut total_shares) = (0i64, 0i64);
    for a in 0..20 {
        assert_eq!(
            unsafe { am_run_account(r, a, &mut cash, &mut shares) },
            AmStatus::Ok
        );
        total_cash += cash;
        total_shares += shares;
    }
    assert_eq!((total_cash, total_shares), (20 * 1_000_000, 20 * 100));
    assert_eq!(
        unsafe { am_run_account(r, 20, &mut cash, &mut shares) },
        AmStatus::OutOfRange
    );

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { am_run_report_json(r, 10, &mut json) },
        AmStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { am_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.is_object());

    unsafe {
        am_run_free(r);
        am_scenario_free(s);
    }
}

#[test]
fn same_seed_same_tape_and_seed_override() {
    let s = scenario(SCENARIO);
    let (a, b) = (run(s), run(s));
    assert_eq!(tape(a), tape(b));
    assert_eq!(unsafe { am_scenario_set_seed(s, 5) }, AmStatus::Ok);
    let c = run(s);
    assert_ne!(tape(a), tape(c));
    unsafe {
        am_run_free(a);
        am_run_free(b);
        am_run_free(c);
        am_scenario_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut s = ptr::null_mut();
    let bad = CString::new(r#"{"families": []}"#).unwrap();
    assert_eq!(
        unsafe { am_scenario_from_json(bad.as_ptr(), ptr::null(), &mut s) },
        AmStatus::ConfigError
    );
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { am_scenario_from_json(ptr::null(), ptr::null(), &mut s) },
        AmStatus::NullPointer
    );

    let not_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { am_scenario_from_json(not_utf8.as_ptr().cast(), ptr::null(), &mut s) },
        AmStatus::InvalidUtf8
    );

    let mut t = AmTrade::default();
    assert_eq!(
        unsafe { am_run_trade(ptr::null(), 0, &mut t) },
        AmStatus::NullPointer
    );
    assert_eq!(unsafe { am_run_trade_count(ptr::null()) }, 0);

    let missing = CString::new("/nonexistent/scenario.json").unwrap();
    assert_eq!(
        unsafe { am_scenario_load(missing.as_ptr(), &mut s) },
        AmStatus::ConfigError
    );
}

#[test]
fn success_clears_previous_error() {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { am_scenario_from_json(ptr::null(), ptr::null(), &mut s) },
        AmStatus::NullPointer
    );
    let s = scenario(SCENARIO);
    assert!(am_last_error().is_null());
    unsafe { am_scenario_free(s) };
}

#[test]
fn avatar_check() {
    let good = CString::new("avatar \"idle\" {\n on wake { cancel_all(); }\n}\n").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { am_avatar_check(good.as_ptr(), &mut out) },
        AmStatus::Ok
    );
    let printed = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { am_string_free(out) };
    assert!(printed.contains("avatar \"idle\""));

    let bad = CString::new("avatar \"x\" {\n on wake { submit_limit(buy, 1); }\n}\n").unwrap();
    assert_eq!(
        unsafe { am_avatar_check(bad.as_ptr(), ptr::null_mut()) },
        AmStatus::AvatarError
    );
    assert!(last_error().contains('2'));
}

#[test]
fn archive_written() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(SCENARIO);
    let r = run(s);
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { am_run_write_archive(r, d.as_ptr(), 10) },
        AmStatus::Ok
    );
    for f in ["tape.csv", "snapshots.csv", "config.json", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    unsafe {
        am_run_free(r);
        am_scenario_free(s);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(am_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
