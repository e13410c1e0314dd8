//! C interface to `discfdr`.
//!
//! Every fallible function returns a [`DfStatus`] and writes its results
//! through out-pointers. On failure [`df_last_error_message`] describes the
//! problem. Supports are opaque [`DfSupport`] handles released with
//! [`df_support_free`]. Arrays are passed as pointer plus length; a length of
//! zero permits a null pointer.

#![allow(clippy::missing_safety_doc)]

mod status;

use std::ffi::c_char;
use std::slice;

use discfdr::estimator::{
    build_grid, default_taus, nu, pi0_hat_h, pi0_hat_substituted, storey_pi0, storey_pi0_s,
    TuningGrid,
};
use discfdr::exact_tests::{bt_pvalue, bt_support, fet_support, CountPair, PValueSupport};
use discfdr::procedures::{adaptive_bh, adaptive_bhh, RejectionReport};
use discfdr::simulate::lemma1_bound_check;

pub use status::{df_last_error_message, DfStatus};
use status::{guard, null, Fail};

/// Attainable p-values of one exact test and their null law.
pub struct DfSupport(PValueSupport);

unsafe fn out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or_else(|| null(name))
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        Ok(&[])
    } else if ptr.is_null() {
        Err(null(name))
    } else {
        Ok(slice::from_raw_parts(ptr, len))
    }
}

unsafe fn support<'a>(ptr: *const DfSupport) -> Result<&'a PValueSupport, Fail> {
    ptr.as_ref().map(|s| &s.0).ok_or_else(|| null("support"))
}

unsafe fn supports<'a>(
    ptr: *const *const DfSupport,
    m: usize,
) -> Result<Vec<&'a PValueSupport>, Fail> {
    input(ptr, m, "supports")?
        .iter()
        .map(|&s| support(s))
        .collect()
}

fn boxed(s: PValueSupport, handle: &mut *mut DfSupport) {
    *handle = Box::into_raw(Box::new(DfSupport(s)));
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the support of the two-sided Fisher exact test for group sizes
/// `n1`, `n2` and total count `c`.
#[no_mangle]
pub unsafe extern "C" fn df_fet_support_new(
    n1: u64,
    n2: u64,
    c: u64,
    out_support: *mut *mut DfSupport,
) -> DfStatus {
    guard(|| {
        let handle = out(out_support, "out_support")?;
        boxed(fet_support(n1, n2, c)?, handle);
        Ok(())
    })
}

/// Creates the support of the conditional binomial (sign) test with `c`
/// total events.
#[no_mangle]
pub unsafe extern "C" fn df_bt_support_new(c: u64, out_support: *mut *mut DfSupport) -> DfStatus {
    guard(|| {
        let handle = out(out_support, "out_support")?;
        boxed(bt_support(c), handle);
        Ok(())
    })
}

/// Releases a support. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn df_support_free(support: *mut DfSupport) {
    if !support.is_null() {
        drop(Box::from_raw(support));
    }
}

/// Number of attainable p-values; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn df_support_len(support: *const DfSupport) -> usize {
    support.as_ref().map_or(0, |s| s.0.values().len())
}

unsafe fn copy_out(
    src: &[f64],
    dst: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> Result<(), Fail> {
    let written = out(written, "out_len")?;
    *written = src.len();
    if capacity < src.len() {
        return Err(Fail(
            DfStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(null("buffer"));
        }
        slice::from_raw_parts_mut(dst, src.len()).copy_from_slice(src);
    }
    Ok(())
}

/// Copies the sorted support values into `buffer`. `out_len` receives the
/// number of values, also when the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn df_support_values(
    support: *const DfSupport,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> DfStatus {
    guard(|| copy_out(self::support(support)?.values(), buffer, capacity, out_len))
}

/// Copies the null probability of each support value into `buffer`.
#[no_mangle]
pub unsafe extern "C" fn df_support_masses(
    support: *const DfSupport,
    buffer: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> DfStatus {
    guard(|| copy_out(self::support(support)?.masses(), buffer, capacity, out_len))
}

/// Null CDF `P(p <= t)`.
#[no_mangle]
pub unsafe extern "C" fn df_support_null_cdf(
    support: *const DfSupport,
    t: f64,
    out_value: *mut f64,
) -> DfStatus {
    guard(|| {
        *out(out_value, "out_value")? = self::support(support)?.null_cdf(t);
        Ok(())
    })
}

/// `P(p <= t)` under the noncentral law with odds ratio `psi`.
#[no_mangle]
pub unsafe extern "C" fn df_support_alt_cdf(
    support: *const DfSupport,
    psi: f64,
    t: f64,
    out_value: *mut f64,
) -> DfStatus {
    guard(|| {
        *out(out_value, "out_value")? = self::support(support)?.alt_cdf(psi, t)?;
        Ok(())
    })
}

/// P-value attached to outcome `y` (the group-1 count).
#[no_mangle]
pub unsafe extern "C" fn df_support_pvalue_of_outcome(
    support: *const DfSupport,
    y: u64,
    out_value: *mut f64,
) -> DfStatus {
    guard(|| {
        let s = self::support(support)?;
        let (lo, hi) = s.outcome_range();
        *out(out_value, "out_value")? = s.pvalue_of_outcome(y).ok_or_else(|| {
            Fail(
                DfStatus::InvalidInput,
                format!("outcome {y} outside {lo}..={hi}"),
            )
        })?;
        Ok(())
    })
}

/// Two-sided Fisher exact p-value for `x1` of `n1` against `x2` of `n2`.
#[no_mangle]
pub unsafe extern "C" fn df_fet_pvalue(
    x1: u64,
    x2: u64,
    n1: u64,
    n2: u64,
    out_value: *mut f64,
) -> DfStatus {
    guard(|| {
        let pair = CountPair::new(x1, x2, n1, n2)?;
        *out(out_value, "out_value")? =
            pair.support().pvalue_of_outcome(x1).expect("valid outcome");
        Ok(())
    })
}

/// Two-sided sign-test p-value for `x` of `c` events.
#[no_mangle]
pub unsafe extern "C" fn df_bt_pvalue(x: u64, c: u64, out_value: *mut f64) -> DfStatus {
    guard(|| {
        *out(out_value, "out_value")? = bt_pvalue(x, c)?;
        Ok(())
    })
}

unsafe fn grid_for(
    supports: &[&PValueSupport],
    taus: *const f64,
    n_taus: usize,
) -> Result<TuningGrid, Fail> {
    let taus = match n_taus {
        0 => default_taus(nu(supports)),
        n => input(taus, n, "taus")?.to_vec(),
    };
    Ok(build_grid(supports, &taus)?)
}

/// Proportion-of-nulls estimate from `m` p-values and their supports.
/// `n_taus = 0` selects the default grid `max(nu, j / 20)`.
#[no_mangle]
pub unsafe extern "C" fn df_pi0_hat_h(
    supports: *const *const DfSupport,
    pvalues: *const f64,
    m: usize,
    taus: *const f64,
    n_taus: usize,
    out_pi0: *mut f64,
) -> DfStatus {
    guard(|| {
        let s = self::supports(supports, m)?;
        let p = input(pvalues, m, "pvalues")?;
        let grid = grid_for(&s, taus, n_taus)?;
        *out(out_pi0, "out_pi0")? = pi0_hat_h(p, &grid)?.pi0_hat;
        Ok(())
    })
}

/// The comparator of [`df_pi0_hat_h`] with each `eta_j` replaced by `tau_j`.
#[no_mangle]
pub unsafe extern "C" fn df_pi0_hat_substituted(
    supports: *const *const DfSupport,
    pvalues: *const f64,
    m: usize,
    taus: *const f64,
    n_taus: usize,
    out_pi0: *mut f64,
) -> DfStatus {
    guard(|| {
        let s = self::supports(supports, m)?;
        let p = input(pvalues, m, "pvalues")?;
        let grid = grid_for(&s, taus, n_taus)?;
        *out(out_pi0, "out_pi0")? = pi0_hat_substituted(p, &grid)?.pi0_hat;
        Ok(())
    })
}

/// Storey's estimator at `tau`, capped at 1. With `plus_one` nonzero the
/// numerator gains 1.
#[no_mangle]
pub unsafe extern "C" fn df_storey_pi0(
    pvalues: *const f64,
    m: usize,
    tau: f64,
    plus_one: bool,
    out_pi0: *mut f64,
) -> DfStatus {
    guard(|| {
        let p = input(pvalues, m, "pvalues")?;
        *out(out_pi0, "out_pi0")? = if plus_one {
            storey_pi0_s(p, tau)?
        } else {
            storey_pi0(p, tau)?
        };
        Ok(())
    })
}

/// Writes a rejection report: `adjusted` and `rejected` (each of length `m`)
/// may be null when not needed.
unsafe fn emit(
    report: RejectionReport,
    adjusted: *mut f64,
    rejected: *mut u8,
    out_k: *mut usize,
) -> Result<(), Fail> {
    let m = report.adjusted.len();
    if !adjusted.is_null() && m > 0 {
        slice::from_raw_parts_mut(adjusted, m).copy_from_slice(&report.adjusted);
    }
    if !rejected.is_null() && m > 0 {
        let flags = slice::from_raw_parts_mut(rejected, m);
        for (flag, hit) in flags.iter_mut().zip(report.rejection_flags()) {
            *flag = hit as u8;
        }
    }
    *out(out_k, "out_k")? = report.k_hat;
    Ok(())
}

/// Benjamini-Hochberg step-up at level `alpha` with plug-in `pi0` in
/// `(0, 1]`; 1 gives the plain procedure.
#[no_mangle]
pub unsafe extern "C" fn df_bh(
    pvalues: *const f64,
    m: usize,
    pi0: f64,
    alpha: f64,
    out_adjusted: *mut f64,
    out_rejected: *mut u8,
    out_k: *mut usize,
) -> DfStatus {
    guard(|| {
        let p = input(pvalues, m, "pvalues")?;
        emit(
            adaptive_bh(p, pi0, alpha)?,
            out_adjusted,
            out_rejected,
            out_k,
        )
    })
}

/// Discrete step-up procedure using each test's null CDF, with plug-in
/// `pi0` in `(0, 1]`; 1 gives the plain procedure.
#[no_mangle]
pub unsafe extern "C" fn df_bhh(
    supports: *const *const DfSupport,
    pvalues: *const f64,
    m: usize,
    pi0: f64,
    alpha: f64,
    out_adjusted: *mut f64,
    out_rejected: *mut u8,
    out_k: *mut usize,
) -> DfStatus {
    guard(|| {
        let s = self::supports(supports, m)?;
        let p = input(pvalues, m, "pvalues")?;
        emit(
            adaptive_bhh(p, &s, pi0, alpha)?,
            out_adjusted,
            out_rejected,
            out_k,
        )
    })
}

/// Closed form and direct sum of `E[1 / (1 + B)]`, `B ~ Binomial(m0 - 1,
/// 1 - eta)`, with the bound `1 / (m0 (1 - eta))`.
#[no_mangle]
pub unsafe extern "C" fn df_inverse_binomial_check(
    m0: u64,
    eta: f64,
    out_closed_form: *mut f64,
    out_summed: *mut f64,
    out_bound: *mut f64,
) -> DfStatus {
    guard(|| {
        let check = lemma1_bound_check(m0, eta)?;
        *out(out_closed_form, "out_closed_form")? = check.closed_form;
        *out(out_summed, "out_summed")? = check.summed;
        *out(out_bound, "out_bound")? = check.bound;
        Ok(())
    })
}
