//! C ABI for the costrec library.
//!
//! The surface is deliberately small: parse a TOML experiment config into an
//! opaque instance handle, build the configured reduction from it, run the
//! resulting mechanism on valuation profiles, and pull out the threshold
//! schedule and audit results as strings. Every entry point returns a
//! [`CostrecStatus`]; on anything other than `Ok` (and `AuditFail`, which is
//! a result, not an error) a human-readable message is available from
//! [`costrec_last_error`] on the same thread.
//!
//! Conventions:
//! - handles are created and destroyed only by this library; pass them back
//!   to the matching `*_free` exactly once
//! - strings returned as `char*` are owned by the caller and must be
//!   released with [`costrec_string_free`]
//! - no call keeps a reference to caller memory after it returns
//! - panics are caught at the boundary and reported as `Panicked`
//!
//! The generated header lives at `include/costrec.h`.

use costrec::audit::standard_suite;
use costrec::config::{BuiltInstance, BuiltMechanism, ExperimentConfig};
use costrec::model::ValuationProfile;
use costrec::report::audit_json;
use costrec::rng::Stream;
use costrec::Error;
use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Deviation tolerance the audit entry point hands to the incentive checks.
const BIC_TOL: f64 = 1e-9;
/// Slack the audit entry point allows on exact cost-recovery margins.
const RECOVERY_TOL: f64 = 1e-9;
/// Stream tag for profiles run through the ABI, distinct from every tag the
/// library uses internally.
const FFI_RUN_TAG: u64 = 12001;

/// Result of every ABI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CostrecStatus {
    /// The call succeeded.
    Ok = 0,
    /// The audit ran to completion and at least one check failed.
    AuditFail = 1,
    /// The config could not be parsed or validated.
    ConfigError = 2,
    /// The config is valid but the requested combination cannot be built or
    /// evaluated (for example exact mode on a continuous prior).
    Incompatible = 3,
    /// A null pointer, wrong length, or otherwise unusable argument.
    BadArgument = 4,
    /// An internal panic was caught at the boundary.
    Panicked = 5,
}

/// A parsed experiment config plus the instance it describes.
pub struct CostrecInstance {
    cfg: ExperimentConfig,
    built: BuiltInstance,
}

/// A mechanism produced by [`costrec_reduce`].
pub struct CostrecMechanism {
    mech: BuiltMechanism,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

/// Same partition the CLI uses for exit codes: config-shaped problems vs
/// everything the library reports about a structurally valid request.
fn status_of(err: &Error) -> CostrecStatus {
    match err {
        Error::Config(_) | Error::InvalidInstance(_) | Error::EntryBelowOne { .. } | Error::Io(_) => {
            CostrecStatus::ConfigError
        }
        _ => CostrecStatus::Incompatible,
    }
}

fn fail(err: &Error) -> CostrecStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn bad_argument(msg: &str) -> CostrecStatus {
    set_error(msg);
    CostrecStatus::BadArgument
}

fn guarded(f: impl FnOnce() -> CostrecStatus) -> CostrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the ABI boundary");
            CostrecStatus::Panicked
        }
    }
}

/// ABI revision of this header; bumped on any incompatible change.
#[no_mangle]
pub extern "C" fn costrec_abi_version() -> u32 {
    1
}

/// Message describing the most recent failure on the calling thread, or
/// null if there has been none. The pointer stays valid until the next
/// failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn costrec_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// Parse a TOML experiment config and build the instance it describes.
/// On `Ok`, `*out` owns the new handle.
///
/// # Safety
/// `text` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn costrec_instance_from_toml(
    text: *const c_char,
    out: *mut *mut CostrecInstance,
) -> CostrecStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return bad_argument("costrec_instance_from_toml: null pointer");
        }
        let text = match unsafe { CStr::from_ptr(text) }.to_str() {
            Ok(s) => s,
            Err(_) => return bad_argument("config text is not valid UTF-8"),
        };
        let cfg = match ExperimentConfig::from_toml_str(text) {
            Ok(cfg) => cfg,
            Err(err) => return fail(&err),
        };
        let built = match cfg.instance.build() {
            Ok(built) => built,
            Err(err) => return fail(&err),
        };
        let handle = Box::new(CostrecInstance { cfg, built });
        unsafe { *out = Box::into_raw(handle) };
        CostrecStatus::Ok
    })
}

/// Number of agents in the instance; 0 if the handle is null.
///
/// # Safety
/// `inst` must be a live handle from [`costrec_instance_from_toml`] or null.
#[no_mangle]
pub unsafe extern "C" fn costrec_instance_agents(inst: *const CostrecInstance) -> usize {
    if inst.is_null() {
        return 0;
    }
    unsafe { &*inst }.built.n
}

/// Release an instance handle. Null is ignored.
///
/// # Safety
/// `inst` must be a handle from [`costrec_instance_from_toml`] that has not
/// been freed, or null.
#[no_mangle]
pub unsafe extern "C" fn costrec_instance_free(inst: *mut CostrecInstance) {
    if !inst.is_null() {
        drop(unsafe { Box::from_raw(inst) });
    }
}

/// Build the reduction the config asked for around the instance's base
/// algorithm. On `Ok`, `*out` owns the new mechanism handle; the instance
/// handle stays usable and independent.
///
/// # Safety
/// `inst` must be a live instance handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn costrec_reduce(
    inst: *const CostrecInstance,
    out: *mut *mut CostrecMechanism,
) -> CostrecStatus {
    guarded(|| {
        if inst.is_null() || out.is_null() {
            return bad_argument("costrec_reduce: null pointer");
        }
        let inst = unsafe { &*inst };
        let mech = match inst.cfg.build() {
            Ok((_, mech)) => mech,
            Err(err) => return fail(&err),
        };
        unsafe { *out = Box::into_raw(Box::new(CostrecMechanism { mech })) };
        CostrecStatus::Ok
    })
}

/// Release a mechanism handle. Null is ignored.
///
/// # Safety
/// `mech` must be a handle from [`costrec_reduce`] that has not been freed,
/// or null.
#[no_mangle]
pub unsafe extern "C" fn costrec_mechanism_free(mech: *mut CostrecMechanism) {
    if !mech.is_null() {
        drop(unsafe { Box::from_raw(mech) });
    }
}

/// The price floor a threshold reduction settled on. Fails with
/// `Incompatible` when the configured reduction has no threshold schedule
/// (the ex-post reductions price per profile instead).
///
/// # Safety
/// `mech` must be a live mechanism handle and `out` writable storage for
/// one double.
#[no_mangle]
pub unsafe extern "C" fn costrec_mechanism_threshold(
    mech: *const CostrecMechanism,
    out: *mut f64,
) -> CostrecStatus {
    guarded(|| {
        if mech.is_null() || out.is_null() {
            return bad_argument("costrec_mechanism_threshold: null pointer");
        }
        match &unsafe { &*mech }.mech {
            BuiltMechanism::PriceFloor(m) => {
                unsafe { *out = m.threshold() };
                CostrecStatus::Ok
            }
            BuiltMechanism::Expost(_) => {
                set_error("this reduction prices per profile and has no threshold schedule");
                CostrecStatus::Incompatible
            }
        }
    })
}

/// Run the mechanism once on a valuation profile. `values` holds `len`
/// nonnegative valuations, one per agent, and `len` must equal the agent
/// count. The outcome is written to `served` (0/1 per agent) and `payments`
/// (charge per agent); both must hold `len` entries. `seed` fixes the
/// mechanism's internal randomness, so equal seeds replay equal outcomes.
///
/// # Safety
/// `mech` must be a live mechanism handle; `values`, `served`, and
/// `payments` must point to `len` readable (respectively writable) entries.
#[no_mangle]
pub unsafe extern "C" fn costrec_mechanism_run(
    mech: *const CostrecMechanism,
    values: *const f64,
    len: usize,
    seed: u64,
    served: *mut u8,
    payments: *mut f64,
) -> CostrecStatus {
    guarded(|| {
        if mech.is_null() || values.is_null() || served.is_null() || payments.is_null() {
            return bad_argument("costrec_mechanism_run: null pointer");
        }
        let mech = unsafe { &*mech }.mech.mechanism();
        if len != mech.n() {
            return bad_argument(&format!(
                "profile has {len} values but the mechanism expects {}",
                mech.n()
            ));
        }
        let profile = match ValuationProfile::new(unsafe {
            std::slice::from_raw_parts(values, len).to_vec()
        }) {
            Ok(profile) => profile,
            Err(err) => return fail(&err),
        };
        let mut rng = Stream::keyed(seed, FFI_RUN_TAG, &[]);
        let result = match mech.run(&profile, &mut rng) {
            Ok(result) => result,
            Err(err) => return fail(&err),
        };
        for i in 0..len {
            unsafe {
                *served.add(i) = u8::from(result.served.contains(i));
                *payments.add(i) = result.payments[i];
            }
        }
        CostrecStatus::Ok
    })
}

/// The threshold schedule as CSV (same layout the CLI writes), or null when
/// the reduction has no schedule. Free the string with
/// [`costrec_string_free`].
///
/// # Safety
/// `mech` must be a live mechanism handle or null.
#[no_mangle]
pub unsafe extern "C" fn costrec_mechanism_schedule_csv(
    mech: *const CostrecMechanism,
) -> *mut c_char {
    if mech.is_null() {
        return std::ptr::null_mut();
    }
    match unsafe { &*mech }.mech.schedule() {
        Some(schedule) => CString::new(costrec::report::schedule_csv(schedule))
            .map_or(std::ptr::null_mut(), CString::into_raw),
        None => std::ptr::null_mut(),
    }
}

/// Run the standard audit suite for this instance/mechanism pair and hand
/// back the reports as a JSON array. Returns `Ok` when every check passes
/// and `AuditFail` when at least one fails; `*out` carries the JSON in both
/// cases. Free it with [`costrec_string_free`].
///
/// # Safety
/// `inst` and `mech` must be live handles built from the same config, and
/// `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn costrec_audit_json(
    inst: *const CostrecInstance,
    mech: *const CostrecMechanism,
    out: *mut *mut c_char,
) -> CostrecStatus {
    guarded(|| {
        if inst.is_null() || mech.is_null() || out.is_null() {
            return bad_argument("costrec_audit_json: null pointer");
        }
        let inst = unsafe { &*inst };
        let mech = unsafe { &*mech };
        let reports = match standard_suite(
            &inst.cfg,
            &inst.built,
            &mech.mech,
            BIC_TOL,
            RECOVERY_TOL,
        ) {
            Ok(reports) => reports,
            Err(err) => return fail(&err),
        };
        let all_pass = reports.iter().all(|r| r.pass);
        let json = match CString::new(audit_json(&reports)) {
            Ok(json) => json,
            Err(_) => return bad_argument("audit report contained a NUL byte"),
        };
        unsafe { *out = json.into_raw() };
        if all_pass {
            CostrecStatus::Ok
        } else {
            set_error("at least one audit check failed; see the report");
            CostrecStatus::AuditFail
        }
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a string returned by this library that has not been freed,
/// or null.
#[no_mangle]
pub unsafe extern "C" fn costrec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
