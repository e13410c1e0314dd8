use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, UnwindSafe};

use discfdr::Error;

/// Result code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed data: counts, p-values or lengths.
    InvalidInput = 2,
    /// Parameters inconsistent with the data or with each other.
    InvalidConfig = 3,
    /// A tuning parameter lies outside `[nu, 1)`.
    TauOutOfRange = 4,
    Degenerate = 5,
    /// An output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

pub(crate) fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

impl From<&Error> for DfStatus {
    fn from(err: &Error) -> Self {
        match err {
            Error::Input(_) | Error::Parse { .. } | Error::Io(_) => DfStatus::InvalidInput,
            Error::Config(_) => DfStatus::InvalidConfig,
            Error::TauOutOfRange { .. } => DfStatus::TauOutOfRange,
            Error::Degenerate(_) => DfStatus::Degenerate,
        }
    }
}

/// Failure raised inside a wrapper body.
pub(crate) struct Fail(pub DfStatus, pub String);

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        Fail(DfStatus::from(&err), err.to_string())
    }
}

pub(crate) fn null(name: &str) -> Fail {
    Fail(DfStatus::NullPointer, format!("{name} is null"))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
pub(crate) fn guard<F>(body: F) -> DfStatus
where
    F: FnOnce() -> Result<(), Fail> + UnwindSafe,
{
    clear_last_error();
    match catch_unwind(body) {
        Ok(Ok(())) => DfStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            DfStatus::Panic
        }
    }
}

/// Message describing the last failure on this thread, or null if the most
/// recent call succeeded. The pointer stays valid until the next call into
/// this library on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}
