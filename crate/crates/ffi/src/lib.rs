//! C ABI over `pcref`.
//!
//! Cards are opaque heap handles created by the `pcref_card_*` constructors
//! and released with [`pcref_card_free`]. Every fallible call returns a
//! [`PcrefStatus`]; on failure [`pcref_last_error`] yields a message that
//! stays valid until the next failing call on the same thread. Panics are
//! caught at the boundary and reported as `PCREF_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pcref::analysis::{box_tc, fom1, fom2, sweep_temperature, FomInputs, Grid};
use pcref::circuits::{solve_pcr, CircuitOptions, Topology};
use pcref::error::Error;
use pcref::techcard::{builtin_card, load_card, CornerSelection, TechnologyCard};
use pcref::trimming::TrimState;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcrefStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Input = 6,
    Domain = 7,
    Precondition = 8,
    Headroom = 9,
    NoConvergence = 10,
    Panic = 11,
}

/// Opaque technology card.
pub struct PcrefCard {
    card: TechnologyCard,
}

/// Circuit switches. `topology` is 0 for the proposed reference and 1 for
/// the conventional one. Trim codes apply only when `use_trim` is set.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PcrefOptions {
    pub topology: u32,
    pub include_diode: bool,
    pub include_replica: bool,
    pub include_m7: bool,
    pub vds_factors: bool,
    pub use_trim: bool,
    pub tc_code: u32,
    pub iref_code: u32,
}

/// DC operating point. `v_dnw` is NaN when the deep n-well is tied to V_DD.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PcrefOperatingPoint {
    pub i_ref: f64,
    pub i_out: f64,
    pub v_b2: f64,
    pub v_dnw: f64,
    pub i_dio: f64,
    pub i_2t: f64,
    pub v_gs1: f64,
    pub v_gs2: f64,
    pub v_sg4: f64,
    pub saturated: bool,
    pub converged: bool,
    pub iterations: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PcrefStatus {
    match e {
        Error::Io { .. } => PcrefStatus::Io,
        Error::Parse(_) => PcrefStatus::Parse,
        Error::Validation(_) => PcrefStatus::Validation,
        Error::Input(_) => PcrefStatus::Input,
        Error::Domain(_) => PcrefStatus::Domain,
        Error::Precondition(_) => PcrefStatus::Precondition,
        Error::Headroom(_) => PcrefStatus::Headroom,
        Error::NoConvergence(_) => PcrefStatus::NoConvergence,
    }
}

/// Failure inside the boundary: a library error or an argument problem.
enum Fail {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PcrefStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcrefStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            PcrefStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(&format!("{what} is not valid UTF-8"));
            PcrefStatus::InvalidUtf8
        }
        Err(_) => {
            set_error("panic inside pcref");
            PcrefStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn card_arg<'a>(p: *const PcrefCard) -> Result<&'a TechnologyCard, Fail> {
    p.as_ref().map(|c| &c.card).ok_or(Fail::Null("card"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn emit_card(out: *mut *mut PcrefCard, card: TechnologyCard) -> Result<(), Fail> {
    let slot = out_arg(out, "out")?;
    *slot = Box::into_raw(Box::new(PcrefCard { card }));
    Ok(())
}

fn circuit_options(card: &TechnologyCard, o: &PcrefOptions) -> Result<CircuitOptions, Fail> {
    let topology = match o.topology {
        0 => Topology::Proposed,
        1 => Topology::Conventional,
        t => return Err(Error::Input(format!("topology must be 0 or 1, got {t}")).into()),
    };
    let trim = if o.use_trim {
        let state = TrimState { tc_code: o.tc_code, iref_code: o.iref_code };
        card.trim
            .as_ref()
            .ok_or_else(|| Error::Input(format!("card {} has no trim configuration", card.name)))?
            .check_state(&state)?;
        Some(state)
    } else {
        None
    };
    Ok(CircuitOptions {
        topology,
        include_diode: o.include_diode,
        include_replica: o.include_replica,
        include_m7: o.include_m7,
        vds_factors: o.vds_factors,
        trim,
        ..CircuitOptions::default()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pcref_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread (empty if none).
#[no_mangle]
pub extern "C" fn pcref_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a card from a JSON file.
#[no_mangle]
pub unsafe extern "C" fn pcref_card_load(path: *const c_char, out: *mut *mut PcrefCard) -> PcrefStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        emit_card(out, load_card(path)?)
    })
}

/// Parse a card from a JSON string.
#[no_mangle]
pub unsafe extern "C" fn pcref_card_from_json(json: *const c_char, out: *mut *mut PcrefCard) -> PcrefStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        emit_card(out, TechnologyCard::from_json_str(text)?)
    })
}

/// One of the shipped cards: "fdsoi22" or "bulk110".
#[no_mangle]
pub unsafe extern "C" fn pcref_card_builtin(name: *const c_char, out: *mut *mut PcrefCard) -> PcrefStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        emit_card(out, builtin_card(name)?)
    })
}

/// Release a card. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pcref_card_free(card: *mut PcrefCard) {
    if !card.is_null() {
        drop(Box::from_raw(card));
    }
}

/// New card with a named corner applied; the input card is unchanged.
#[no_mangle]
pub unsafe extern "C" fn pcref_card_apply_corner(
    card: *const PcrefCard,
    corner: *const c_char,
    out: *mut *mut PcrefCard,
) -> PcrefStatus {
    guard(|| {
        let c = card_arg(card)?;
        let name = str_arg(corner, "corner")?;
        emit_card(out, c.apply_corner(&CornerSelection::Named(name.to_string()))?)
    })
}

/// Nominal supply of the card, V.
#[no_mangle]
pub unsafe extern "C" fn pcref_card_nominal_vdd(card: *const PcrefCard, out: *mut f64) -> PcrefStatus {
    guard(|| {
        *out_arg(out, "out")? = card_arg(card)?.v_dd_nominal;
        Ok(())
    })
}

/// Default options for a card: proposed topology, diode and replica on,
/// M7 when the card has it, V_DS factors on, untrimmed.
#[no_mangle]
pub unsafe extern "C" fn pcref_default_options(card: *const PcrefCard, out: *mut PcrefOptions) -> PcrefStatus {
    guard(|| {
        let o = CircuitOptions::for_card(card_arg(card)?);
        *out_arg(out, "out")? = PcrefOptions {
            topology: 0,
            include_diode: o.include_diode,
            include_replica: o.include_replica,
            include_m7: o.include_m7,
            vds_factors: o.vds_factors,
            use_trim: false,
            tc_code: 0,
            iref_code: 0,
        };
        Ok(())
    })
}

/// DC operating point at (`v_dd`, `temp`).
#[no_mangle]
pub unsafe extern "C" fn pcref_solve(
    card: *const PcrefCard,
    opts: *const PcrefOptions,
    v_dd: f64,
    temp: f64,
    out: *mut PcrefOperatingPoint,
) -> PcrefStatus {
    guard(|| {
        let c = card_arg(card)?;
        let o = circuit_options(c, opts.as_ref().ok_or(Fail::Null("opts"))?)?;
        let op = solve_pcr(c, v_dd, temp, &o)?;
        *out_arg(out, "out")? = PcrefOperatingPoint {
            i_ref: op.i_ref,
            i_out: op.i_out,
            v_b2: op.v_b2,
            v_dnw: op.v_dnw.unwrap_or(f64::NAN),
            i_dio: op.i_dio,
            i_2t: op.i_2t,
            v_gs1: op.v_gs1,
            v_gs2: op.v_gs2,
            v_sg4: op.v_sg4,
            saturated: op.saturated.all(),
            converged: op.converged,
            iterations: u32::try_from(op.iterations).unwrap_or(u32::MAX),
        };
        Ok(())
    })
}

/// Box-method TC (ppm/°C) over an inclusive temperature grid.
#[no_mangle]
pub unsafe extern "C" fn pcref_box_tc(
    card: *const PcrefCard,
    opts: *const PcrefOptions,
    v_dd: f64,
    t_min: f64,
    t_max: f64,
    t_step: f64,
    out: *mut f64,
) -> PcrefStatus {
    guard(|| {
        let c = card_arg(card)?;
        let o = circuit_options(c, opts.as_ref().ok_or(Fail::Null("opts"))?)?;
        let grid = Grid::new(t_min, t_max, t_step)?;
        *out_arg(out, "out")? = box_tc(&sweep_temperature(c, v_dd, &grid, &o)?)?;
        Ok(())
    })
}

/// TC/(t_max − t_min)·area, ppm/°C²·mm².
#[no_mangle]
pub unsafe extern "C" fn pcref_fom1(tc: f64, t_min: f64, t_max: f64, area_mm2: f64, out: *mut f64) -> PcrefStatus {
    guard(|| {
        *out_arg(out, "out")? = fom1(&FomInputs { tc, t_min, t_max, area: area_mm2, i_vdd: 1.0, i_ref: 1.0 })?;
        Ok(())
    })
}

/// TC/(t_max − t_min)·i_vdd/i_ref, ppm/°C².
#[no_mangle]
pub unsafe extern "C" fn pcref_fom2(
    tc: f64,
    t_min: f64,
    t_max: f64,
    i_vdd: f64,
    i_ref: f64,
    out: *mut f64,
) -> PcrefStatus {
    guard(|| {
        *out_arg(out, "out")? = fom2(&FomInputs { tc, t_min, t_max, area: 1.0, i_vdd, i_ref })?;
        Ok(())
    })
}
