//! Trim codes: mapping to effective M5 width, series resistance or output
//! mirror ratio, plus exhaustive code searches.
//!
//! Codes are ideal: switch on-resistance and off-leakage are not modeled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{box_tc, sweep_temperature, TempGrid};
use crate::circuits::{solve_pcr, CircuitOptions};
use crate::error::{Error, Result};
use crate::techcard::TechnologyCard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrefStyle {
    SeriesResistor,
    OutputMirror,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimConfig {
    pub tc_bits: u32,
    pub tc_unit_w: f64,
    pub tc_fixed_w: f64,
    pub iref_style: IrefStyle,
    pub iref_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_unit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_fixed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror_fixed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror_ref: Option<u32>,
    /// Codes that reproduce the untrimmed design.
    pub nominal_tc_code: u32,
    pub nominal_iref_code: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimState {
    pub tc_code: u32,
    pub iref_code: u32,
}

impl TrimConfig {
    pub fn tc_codes(&self) -> u32 {
        1 << self.tc_bits
    }

    pub fn iref_codes(&self) -> u32 {
        1 << self.iref_bits
    }

    pub fn nominal_state(&self) -> TrimState {
        TrimState { tc_code: self.nominal_tc_code, iref_code: self.nominal_iref_code }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("trim: {m}")));
        if !(1..=16).contains(&self.tc_bits) || !(1..=16).contains(&self.iref_bits) {
            return bad("bit counts must be in 1..=16");
        }
        if !(self.tc_unit_w > 0.0) || !(self.tc_fixed_w > 0.0) {
            return bad("tc widths must be > 0");
        }
        match self.iref_style {
            IrefStyle::SeriesResistor => {
                if !self.r_unit.is_some_and(|r| r > 0.0) || !self.r_fixed.is_some_and(|r| r > 0.0) {
                    return bad("series_resistor requires r_unit > 0 and r_fixed > 0");
                }
            }
            IrefStyle::OutputMirror => {
                if !self.mirror_fixed.is_some_and(|m| m > 0) || !self.mirror_ref.is_some_and(|m| m > 0) {
                    return bad("output_mirror requires mirror_fixed > 0 and mirror_ref > 0");
                }
            }
        }
        if self.nominal_tc_code >= self.tc_codes() || self.nominal_iref_code >= self.iref_codes() {
            return bad("nominal codes out of range");
        }
        Ok(())
    }

    pub fn check_state(&self, s: &TrimState) -> Result<()> {
        if s.tc_code >= self.tc_codes() {
            return Err(Error::Input(format!("tc_code {} out of range for {} bits", s.tc_code, self.tc_bits)));
        }
        if s.iref_code >= self.iref_codes() {
            return Err(Error::Input(format!(
                "iref_code {} out of range for {} bits",
                s.iref_code, self.iref_bits
            )));
        }
        Ok(())
    }
}

pub fn tc_trim_effective_w5(cfg: &TrimConfig, tc_code: u32) -> Result<f64> {
    if tc_code >= cfg.tc_codes() {
        return Err(Error::Input(format!("tc_code {tc_code} out of range for {} bits", cfg.tc_bits)));
    }
    Ok(cfg.tc_fixed_w + f64::from(tc_code) * cfg.tc_unit_w)
}

/// Series resistance; a set bit shorts its segment.
pub fn iref_trim_resistance(cfg: &TrimConfig, iref_code: u32) -> Result<f64> {
    let (Some(r_unit), Some(r_fixed)) = (cfg.r_unit, cfg.r_fixed) else {
        return Err(Error::Input("iref trim style is not series_resistor".into()));
    };
    if cfg.iref_style != IrefStyle::SeriesResistor {
        return Err(Error::Input("iref trim style is not series_resistor".into()));
    }
    if iref_code >= cfg.iref_codes() {
        return Err(Error::Input(format!("iref_code {iref_code} out of range for {} bits", cfg.iref_bits)));
    }
    let open = (cfg.iref_codes() - 1) & !iref_code;
    Ok(r_fixed + f64::from(open) * r_unit)
}

pub fn iout_trim_mirror(cfg: &TrimConfig, iref_code: u32, i_ref: f64) -> Result<f64> {
    let (Some(fixed), Some(reference)) = (cfg.mirror_fixed, cfg.mirror_ref) else {
        return Err(Error::Input("iref trim style is not output_mirror".into()));
    };
    if cfg.iref_style != IrefStyle::OutputMirror {
        return Err(Error::Input("iref trim style is not output_mirror".into()));
    }
    if iref_code >= cfg.iref_codes() {
        return Err(Error::Input(format!("iref_code {iref_code} out of range for {} bits", cfg.iref_bits)));
    }
    Ok(i_ref * f64::from(fixed + iref_code) / f64::from(reference))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TcTrimMethod {
    FullProfile,
    TwoPoint { t1: f64, t2: f64 },
}

impl TcTrimMethod {
    pub const DEFAULT_TWO_POINT: TcTrimMethod = TcTrimMethod::TwoPoint { t1: -35.0, t2: 65.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcTrimResult {
    pub tc_code: u32,
    /// Box TC over the full grid at the chosen code.
    pub box_tc: f64,
    /// Per-code search metric: box TC (ppm/°C) or two-point mismatch.
    pub scan: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrefTrimResult {
    pub iref_code: u32,
    pub achieved: f64,
    pub scan: Vec<(u32, f64)>,
}

fn trim_config(card: &TechnologyCard) -> Result<&TrimConfig> {
    card.trim
        .as_ref()
        .ok_or_else(|| Error::Input(format!("card {} has no trim configuration", card.name)))
}

/// Lowest-code argmin; NaN never wins.
fn argmin(scan: &[(u32, f64)]) -> (u32, f64) {
    let mut best = scan[0];
    for &(c, v) in &scan[1..] {
        if v < best.1 || best.1.is_nan() {
            best = (c, v);
        }
    }
    best
}

fn with_tc_code(opts: &CircuitOptions, cfg: &TrimConfig, code: u32) -> CircuitOptions {
    let iref_code = opts.trim.map_or(cfg.nominal_iref_code, |t| t.iref_code);
    CircuitOptions { trim: Some(TrimState { tc_code: code, iref_code }), ..opts.clone() }
}

/// Exhaustive TC-code search. The iref code is taken from `opts.trim`
/// (nominal when absent).
pub fn search_tc_trim(
    card: &TechnologyCard,
    v_dd: f64,
    grid: &TempGrid,
    opts: &CircuitOptions,
    method: TcTrimMethod,
) -> Result<TcTrimResult> {
    let cfg = trim_config(card)?;
    let codes: Vec<u32> = (0..cfg.tc_codes()).collect();
    let scan: Vec<(u32, f64)> = codes
        .par_iter()
        .map(|&code| {
            let o = with_tc_code(opts, cfg, code);
            let metric = match method {
                TcTrimMethod::FullProfile => box_tc(&sweep_temperature(card, v_dd, grid, &o)?)?,
                TcTrimMethod::TwoPoint { t1, t2 } => {
                    let i1 = solve_pcr(card, v_dd, t1, &o)?.i_ref;
                    let i2 = solve_pcr(card, v_dd, t2, &o)?.i_ref;
                    (i1 - i2).abs() / (0.5 * (i1 + i2))
                }
            };
            Ok((code, metric))
        })
        .collect::<Result<_>>()?;
    let (tc_code, metric) = argmin(&scan);
    let box_tc = match method {
        TcTrimMethod::FullProfile => metric,
        TcTrimMethod::TwoPoint { .. } => {
            box_tc(&sweep_temperature(card, v_dd, grid, &with_tc_code(opts, cfg, tc_code))?)?
        }
    };
    Ok(TcTrimResult { tc_code, box_tc, scan })
}

/// Exhaustive I_REF-code search at a fixed TC code.
pub fn search_iref_trim(
    card: &TechnologyCard,
    v_dd: f64,
    temp: f64,
    target: f64,
    opts: &CircuitOptions,
) -> Result<IrefTrimResult> {
    let cfg = trim_config(card)?;
    let tc_code = opts
        .trim
        .map(|t| t.tc_code)
        .ok_or_else(|| Error::Input("search_iref_trim needs the TC code fixed in opts.trim".into()))?;
    let codes: Vec<u32> = (0..cfg.iref_codes()).collect();
    let achieved: Vec<(u32, f64)> = match cfg.iref_style {
        IrefStyle::SeriesResistor => codes
            .par_iter()
            .map(|&c| {
                let o = CircuitOptions { trim: Some(TrimState { tc_code, iref_code: c }), ..opts.clone() };
                Ok((c, solve_pcr(card, v_dd, temp, &o)?.i_ref))
            })
            .collect::<Result<_>>()?,
        IrefStyle::OutputMirror => {
            let o = CircuitOptions { trim: Some(TrimState { tc_code, iref_code: 0 }), ..opts.clone() };
            let i_ref = solve_pcr(card, v_dd, temp, &o)?.i_ref;
            codes
                .iter()
                .map(|&c| Ok((c, iout_trim_mirror(cfg, c, i_ref)?)))
                .collect::<Result<_>>()?
        }
    };
    let lo = achieved.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    let hi = achieved.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    if !(target >= lo && target <= hi) {
        return Err(Error::Input(format!(
            "target {target:e} A outside achievable span [{lo:e}, {hi:e}] A"
        )));
    }
    let errors: Vec<(u32, f64)> = achieved.iter().map(|&(c, a)| (c, (a - target).abs())).collect();
    let (iref_code, _) = argmin(&errors);
    Ok(IrefTrimResult { iref_code, achieved: achieved[iref_code as usize].1, scan: achieved })
}
