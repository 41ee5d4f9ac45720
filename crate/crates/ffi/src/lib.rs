//! C interface to `errules`.
//!
//! A session is an opaque handle owning a loaded database and its named
//! queries. Every call returns an [`ErStatus`]; on failure the message is
//! available from [`er_last_error`] on the same thread. Strings handed out by
//! the library are released with [`er_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use errules::eval::{evaluate, EvalError};
use errules::miner::{mine, LanguageBias, MineOptions};
use errules::num_rational::Ratio;
use errules::stats::{confidence, frequency, support, Frequency, StatsError};
use errules::{Error, Session};

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed schema, data or bias document.
    Format = 4,
    Parse = 5,
    NotSafe = 6,
    NotEr = 7,
    NotValid = 8,
    EmptyDomain = 9,
    ZeroAntecedent = 10,
    /// Any other evaluation or usage failure.
    Query = 11,
    Panic = 12,
}

/// Opaque session handle.
pub struct ErSession {
    inner: Session,
}

/// A frequency `numerator / denominator`; `value_*` is the reduced form.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErFrequency {
    pub numerator: u64,
    pub denominator: u64,
    pub value_numerator: u64,
    pub value_denominator: u64,
}

impl From<Frequency> for ErFrequency {
    fn from(f: Frequency) -> Self {
        ErFrequency {
            numerator: f.numerator,
            denominator: f.denominator,
            value_numerator: *f.value.numer(),
            value_denominator: *f.value.denom(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ErStatus {
    match e {
        Error::Io { .. } => ErStatus::Io,
        Error::Schema(_) | Error::Instance(_) | Error::Mine(_) => ErStatus::Format,
        Error::Parse(_) => ErStatus::Parse,
        Error::Er(_) | Error::Eval(EvalError::NotSafe(_)) => ErStatus::NotSafe,
        Error::Stats(s) => match s {
            StatsError::NotSafe(_) | StatsError::Eval(EvalError::NotSafe(_)) => ErStatus::NotSafe,
            StatsError::NotEr(_) => ErStatus::NotEr,
            StatsError::NotValid { .. } | StatsError::Closed => ErStatus::NotValid,
            StatsError::EmptyDomain => ErStatus::EmptyDomain,
            StatsError::ZeroAntecedent => ErStatus::ZeroAntecedent,
            _ => ErStatus::Query,
        },
        _ => ErStatus::Query,
    }
}

struct Failure(ErStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

macro_rules! from_via_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
from_via_error!(StatsError, EvalError, errules::miner::MineError);

/// Run `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ErStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ErStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {}", msg));
            ErStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ErStatus::NullArgument, format!("{} is null", what)));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ErStatus::InvalidUtf8, format!("{} is not UTF-8", what)))
}

unsafe fn session<'a>(s: *const ErSession) -> Result<&'a Session, Failure> {
    s.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| Failure(ErStatus::NullArgument, "session is null".into()))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(ErStatus::NullArgument, format!("{} is null", what)))
    } else {
        Ok(())
    }
}

fn into_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn er_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn er_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn er_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a schema, a data directory and optionally a query file (`queries`
/// may be null). On success `*out` receives a handle for [`er_session_free`].
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn er_session_open(
    schema_path: *const c_char,
    data_dir: *const c_char,
    queries_path: *const c_char,
    out: *mut *mut ErSession,
) -> ErStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let schema = text(schema_path, "schema_path")?;
        let data = text(data_dir, "data_dir")?;
        let queries = if queries_path.is_null() {
            None
        } else {
            Some(Path::new(text(queries_path, "queries_path")?))
        };
        let inner = Session::open(Path::new(schema), Path::new(data), queries)?;
        *out = Box::into_raw(Box::new(ErSession { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`er_session_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn er_session_free(s: *mut ErSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Add `name(vars) := body;` declarations. All or nothing.
///
/// # Safety
/// `s` must be a live handle; `decls` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn er_session_define(s: *mut ErSession, decls: *const c_char) -> ErStatus {
    guard(|| {
        let s = s
            .as_mut()
            .ok_or_else(|| Failure(ErStatus::NullArgument, "session is null".into()))?;
        let t = text(decls, "decls")?;
        s.inner.define(t)?;
        Ok(())
    })
}

/// Number of registered queries, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn er_session_query_count(s: *const ErSession) -> usize {
    s.as_ref().map_or(0, |s| s.inner.registry().len())
}

/// Safety, ER and validity report. `*passed` is set whether or not the query
/// passes; `report` may be null if the text is not wanted.
///
/// # Safety
/// `s` must be a live handle; `query` NUL-terminated; `passed` writable;
/// `report` null or writable.
#[no_mangle]
pub unsafe extern "C" fn er_check(
    s: *const ErSession,
    query: *const c_char,
    passed: *mut bool,
    report: *mut *mut c_char,
) -> ErStatus {
    guard(|| {
        out_ptr(passed, "passed")?;
        let s = session(s)?;
        let r = s.check(&s.resolve(text(query, "query")?)?);
        *passed = r.passed();
        if !report.is_null() {
            *report = into_c(r.to_string());
        }
        Ok(())
    })
}

/// Answer tuples as CSV with a header row.
///
/// # Safety
/// `s` must be a live handle; `query` NUL-terminated; `csv` writable.
#[no_mangle]
pub unsafe extern "C" fn er_eval(s: *const ErSession, query: *const c_char, csv: *mut *mut c_char) -> ErStatus {
    guard(|| {
        out_ptr(csv, "csv")?;
        let s = session(s)?;
        let q = s.resolve(text(query, "query")?)?;
        *csv = into_c(evaluate(s.instance(), &q)?.to_csv());
        Ok(())
    })
}

/// Reference domain of the query's head as CSV.
///
/// # Safety
/// As for [`er_eval`].
#[no_mangle]
pub unsafe extern "C" fn er_domain(s: *const ErSession, query: *const c_char, csv: *mut *mut c_char) -> ErStatus {
    guard(|| {
        out_ptr(csv, "csv")?;
        let s = session(s)?;
        let q = s.resolve(text(query, "query")?)?;
        let d = errules::domain::reference_domain(s.instance(), &q.body, &q.head);
        *csv = into_c(d.to_csv());
        Ok(())
    })
}

/// Frequency of a safe ER query valid for its head.
///
/// # Safety
/// `s` must be a live handle; `query` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn er_frequency(s: *const ErSession, query: *const c_char, out: *mut ErFrequency) -> ErStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let s = session(s)?;
        let q = s.resolve(text(query, "query")?)?;
        *out = frequency(s.instance(), &q)?.into();
        Ok(())
    })
}

/// Support and confidence of `antecedent -> consequent`.
///
/// # Safety
/// `s` must be a live handle; strings NUL-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn er_rule(
    s: *const ErSession,
    antecedent: *const c_char,
    consequent: *const c_char,
    support_out: *mut ErFrequency,
    confidence_out: *mut ErFrequency,
) -> ErStatus {
    guard(|| {
        out_ptr(support_out, "support_out")?;
        out_ptr(confidence_out, "confidence_out")?;
        let s = session(s)?;
        let rule = s.rule(text(antecedent, "antecedent")?, text(consequent, "consequent")?)?;
        let sup = support(s.instance(), &rule)?;
        let conf = confidence(s.instance(), &rule)?;
        *support_out = sup.into();
        *confidence_out = conf.into();
        Ok(())
    })
}

/// Mine with a JSON language bias; `*csv` receives
/// `query,support,confidence` rows. A zero `min_confidence_den` skips rule
/// generation.
///
/// # Safety
/// `s` must be a live handle; `bias_json` NUL-terminated; `csv` writable.
#[no_mangle]
pub unsafe extern "C" fn er_mine(
    s: *const ErSession,
    bias_json: *const c_char,
    min_support_num: u64,
    min_support_den: u64,
    min_confidence_num: u64,
    min_confidence_den: u64,
    csv: *mut *mut c_char,
) -> ErStatus {
    guard(|| {
        out_ptr(csv, "csv")?;
        let s = session(s)?;
        let bias = LanguageBias::from_json(text(bias_json, "bias_json")?, s.instance().schema())?;
        if min_support_den == 0 {
            return Err(Failure(ErStatus::Query, "min_support denominator is zero".into()));
        }
        let opts = MineOptions {
            min_support: Ratio::new(min_support_num, min_support_den),
            max_level: None,
            no_prune: false,
        };
        let conf = (min_confidence_den != 0).then(|| Ratio::new(min_confidence_num, min_confidence_den));
        *csv = into_c(mine(s.instance(), &bias, &opts, conf).to_csv());
        Ok(())
    })
}
